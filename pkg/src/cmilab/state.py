"""Dense statevector engine.

Basis states are labelled by mixed-radix digit strings with site 0 as the
most significant digit, so ``amplitudes.reshape(dims)[x0, x1, ...]`` is the
amplitude of ``|x0 x1 ...>``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

MAX_QUBITS = 24
MAX_DIM = 2**MAX_QUBITS
NORM_TOL = 1e-10
EIG_CUTOFF = 1e-14

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
CNOT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)


class BudgetError(ValueError):
    """Raised when a dense object would exceed the desk-scale size limit."""


@dataclass(frozen=True)
class PureState:
    """Normalized amplitude vector over a register of qudits."""

    amplitudes: np.ndarray
    dims: tuple[int, ...] = field(default=())

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).ravel()
        dims = tuple(int(d) for d in self.dims) if self.dims else _infer_qubits(amps.size)
        if any(d < 2 for d in dims):
            raise ValueError(f"local dimensions must be >= 2, got {dims}")
        total = int(np.prod(dims))
        if total > MAX_DIM:
            raise BudgetError(f"register dimension {total} exceeds 2^{MAX_QUBITS}")
        if amps.size != total:
            raise ValueError(f"amplitude length {amps.size} != prod(dims) = {total}")
        norm = np.vdot(amps, amps).real
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state is not normalized (norm^2 = {norm})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "dims", dims)

    @property
    def n_sites(self) -> int:
        return len(self.dims)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape(self.dims)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def density_matrix(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())

    @classmethod
    def from_vector(cls, vec, dims: Sequence[int] | None = None) -> "PureState":
        """Normalize ``vec`` and wrap it."""
        vec = np.asarray(vec, dtype=complex).ravel()
        norm = np.linalg.norm(vec)
        if norm == 0:
            raise ValueError("cannot normalize the zero vector")
        return cls(vec / norm, tuple(dims) if dims is not None else ())


def _infer_qubits(size: int) -> tuple[int, ...]:
    n = int(round(np.log2(size))) if size > 0 else 0
    if size < 2 or 2**n != size:
        raise ValueError(f"cannot infer qubit register from length {size}")
    return (2,) * n


def basis_state(digits: Sequence[int], dims: Sequence[int] | None = None) -> PureState:
    dims = tuple(dims) if dims is not None else (2,) * len(digits)
    vec = np.zeros(int(np.prod(dims)), dtype=complex)
    vec[np.ravel_multi_index(tuple(digits), dims)] = 1.0
    return PureState(vec, dims)


def product_state(vectors: Sequence[np.ndarray]) -> PureState:
    """Tensor product of single-site vectors (each normalized on the way in)."""
    out = np.ones(1, dtype=complex)
    dims = []
    for v in vectors:
        v = np.asarray(v, dtype=complex)
        out = np.kron(out, v / np.linalg.norm(v))
        dims.append(v.size)
    return PureState(out, tuple(dims))


def tensor_product(*states: PureState) -> PureState:
    out = np.ones(1, dtype=complex)
    dims: list[int] = []
    for s in states:
        out = np.kron(out, s.amplitudes)
        dims.extend(s.dims)
    return PureState(out, tuple(dims))


def epr(d: int = 2) -> PureState:
    vec = np.zeros(d * d, dtype=complex)
    vec[[x * d + x for x in range(d)]] = 1 / np.sqrt(d)
    return PureState(vec, (d, d))


def ghz(n: int) -> PureState:
    vec = np.zeros(2**n, dtype=complex)
    vec[0] = vec[-1] = 1 / np.sqrt(2)
    return PureState(vec, (2,) * n)


def random_state(dims: Sequence[int], rng: np.random.Generator) -> PureState:
    size = int(np.prod(dims))
    vec = rng.standard_normal(size) + 1j * rng.standard_normal(size)
    return PureState.from_vector(vec, dims)


def _check_sites(sites: Sequence[int], n: int) -> list[int]:
    sites = [int(s) for s in sites]
    if len(set(sites)) != len(sites):
        raise ValueError(f"sites must be distinct, got {sites}")
    for s in sites:
        if not 0 <= s < n:
            raise IndexError(f"site {s} out of range for {n} sites")
    return sites


def apply_gate_tensor(psi: np.ndarray, gate: np.ndarray, sites: Sequence[int]) -> np.ndarray:
    """Apply ``gate`` to axes ``sites`` of an amplitude tensor, returning a new tensor.

    No normalization or validation; this is the hot loop used by the circuit
    runners.
    """
    k = len(sites)
    local = [psi.shape[s] for s in sites]
    g = gate.reshape(local + local)
    out = np.tensordot(g, psi, axes=(list(range(k, 2 * k)), list(sites)))
    return np.moveaxis(out, list(range(k)), list(sites))


def apply_gate(state: PureState, gate: np.ndarray, sites: Sequence[int]) -> PureState:
    sites = _check_sites(sites, state.n_sites)
    gate = np.asarray(gate, dtype=complex)
    local = int(np.prod([state.dims[s] for s in sites]))
    if gate.shape != (local, local):
        raise ValueError(f"gate shape {gate.shape} does not match targeted dimension {local}")
    out = apply_gate_tensor(state.tensor(), gate, sites)
    return PureState(out.ravel(), state.dims)


def partial_trace(obj, keep: Sequence[int], dims: Sequence[int] | None = None) -> np.ndarray:
    """Reduced density matrix on ``keep`` (in the order given).

    ``obj`` is a :class:`PureState` or a density matrix; for a bare density
    matrix, ``dims`` gives the per-site dimensions (qubits assumed otherwise).
    An empty ``keep`` returns the 1x1 matrix ``[[tr rho]]``.
    """
    if isinstance(obj, PureState):
        dims = obj.dims
        keep = _check_sites(keep, len(dims))
        rest = [i for i in range(len(dims)) if i not in keep]
        psi = np.transpose(obj.tensor(), keep + rest)
        dk = int(np.prod([dims[i] for i in keep]))
        m = psi.reshape(dk, -1)
        return m @ m.conj().T
    rho = np.asarray(obj, dtype=complex)
    dims = tuple(dims) if dims is not None else _infer_qubits(rho.shape[0])
    n = len(dims)
    keep = _check_sites(keep, n)
    rest = [i for i in range(n) if i not in keep]
    t = rho.reshape(dims + dims)
    t = np.transpose(t, keep + rest + [n + i for i in keep] + [n + i for i in rest])
    dk = int(np.prod([dims[i] for i in keep]))
    dr = int(np.prod([dims[i] for i in rest]))
    return np.einsum("ajbj->ab", t.reshape(dk, dr, dk, dr))


def check_density_matrix(rho: np.ndarray, tol: float = 1e-10) -> None:
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError("density matrix must be square")
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1) > tol:
        raise ValueError(f"density matrix trace {np.trace(rho).real} != 1")
    if np.linalg.eigvalsh(rho).min() < -1e-9:
        raise ValueError("density matrix has negative eigenvalues")


def check_unitary(u: np.ndarray, tol: float = 1e-10) -> None:
    u = np.asarray(u)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise ValueError("unitary must be square")
    if np.linalg.norm(u.conj().T @ u - np.eye(u.shape[0])) > tol:
        raise ValueError("matrix is not unitary")


def _log(x: np.ndarray, base) -> np.ndarray:
    if base == 2:
        return np.log2(x)
    if base == "e" or base == np.e:
        return np.log(x)
    return np.log(x) / np.log(base)


def shannon_entropy(p, base=2) -> float:
    p = np.asarray(p, dtype=float).ravel()
    p = p[p > EIG_CUTOFF]
    return float(-np.sum(p * _log(p, base)))


def von_neumann_entropy(rho: np.ndarray, base=2) -> float:
    """-sum lambda log lambda over eigenvalues above 1e-14."""
    lam = np.linalg.eigvalsh(np.asarray(rho))
    return max(shannon_entropy(lam, base), 0.0)


def binary_entropy(x: float, base=2) -> float:
    return shannon_entropy([x, 1 - x], base)


def _as_two_qubit(obj) -> np.ndarray:
    if isinstance(obj, PureState):
        if obj.dims != (2, 2):
            raise ValueError("concurrence needs a two-qubit state")
        return obj.amplitudes
    arr = np.asarray(obj, dtype=complex)
    if arr.shape not in ((4,), (4, 4)):
        raise ValueError(f"concurrence needs total dimension 4, got shape {arr.shape}")
    return arr


def concurrence(obj) -> float:
    """Two-qubit concurrence.

    Pure input (``PureState`` or length-4 vector) uses ``2|ad - bc|``; a 4x4
    density matrix uses the Wootters eigenvalue formula
    ``max(0, a1 - a2 - a3 - a4)`` on ``sqrt(sqrt(rho) rho~ sqrt(rho))``.
    """
    arr = _as_two_qubit(obj)
    if arr.ndim == 1:
        arr = arr / np.linalg.norm(arr)
        a, b, c, d = arr
        return float(2 * abs(a * d - b * c))
    yy = np.kron(PAULI_Y, PAULI_Y)
    rho_tilde = yy @ arr.conj() @ yy
    w, v = np.linalg.eigh(arr)
    sqrt_rho = (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T
    m = sqrt_rho @ rho_tilde @ sqrt_rho
    alphas = np.sqrt(np.clip(np.linalg.eigvalsh((m + m.conj().T) / 2), 0, None))[::-1]
    return float(max(0.0, alphas[0] - alphas[1:].sum()))


def reduced_concurrence(rho_a: np.ndarray) -> float:
    """sqrt(2 (tr(rho)^2 - tr(rho^2))); works for un-normalized reduced states."""
    rho_a = np.asarray(rho_a)
    tr = np.trace(rho_a).real
    val = 2 * (tr**2 - np.trace(rho_a @ rho_a).real)
    return float(np.sqrt(max(val, 0.0)))


def entropy_from_concurrence(c: float) -> float:
    """Entanglement entropy in bits of a pure two-qubit state with concurrence ``c``."""
    if not -1e-12 <= c <= 1 + 1e-12:
        raise ValueError(f"concurrence must lie in [0, 1], got {c}")
    c = min(max(c, 0.0), 1.0)
    return binary_entropy((1 + np.sqrt(1 - c * c)) / 2, 2)


def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a complex Ginibre matrix with phase fix."""
    if dim < 1:
        raise ValueError("dimension must be >= 1")
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r)
    return q * (diag / np.abs(diag))


@dataclass(frozen=True)
class Outcome:
    digits: tuple[int, ...]
    prob: float
    state: PureState


def measure_subset(state: PureState, sites: Sequence[int], rng: np.random.Generator | None = None):
    """Computational-basis measurement of ``sites``.

    With ``rng`` a single sampled :class:`Outcome` is returned; without it,
    every outcome of positive probability is returned in lexicographic order.
    Post-measurement states keep the full register.
    """
    sites = _check_sites(sites, state.n_sites)
    if not sites:
        raise ValueError("need at least one site to measure")
    rest = [i for i in range(state.n_sites) if i not in sites]
    psi = np.transpose(state.tensor(), sites + rest)
    mdims = [state.dims[s] for s in sites]
    flat = psi.reshape(int(np.prod(mdims)), -1)
    probs = np.sum(np.abs(flat) ** 2, axis=1)
    probs = probs / probs.sum()

    def collapse(idx: int) -> Outcome:
        digits = np.unravel_index(idx, mdims)
        post = np.zeros_like(flat)
        post[idx] = flat[idx] / np.sqrt(probs[idx])
        post = post.reshape(mdims + [state.dims[i] for i in rest])
        post = np.transpose(post, np.argsort(sites + rest))
        return Outcome(tuple(int(d) for d in digits), float(probs[idx]), PureState.from_vector(post, state.dims))

    if rng is not None:
        return collapse(int(rng.choice(probs.size, p=probs)))
    return [collapse(i) for i in np.flatnonzero(probs > EIG_CUTOFF)]


def ry(theta: float) -> np.ndarray:
    """cos(theta/2) 1 + i sin(theta/2) Y = [[c, s], [-s, c]] with half angles."""
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, s], [-s, c]], dtype=complex)


def haar_unitary_batch(dim: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` independent Haar unitaries stacked along axis 0."""
    if dim < 1:
        raise ValueError("dimension must be >= 1")
    shape = (count, dim, dim)
    z = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r, axis1=1, axis2=2)
    return q * (diag / np.abs(diag))[:, None, :]


def swap_operator(dim: int) -> np.ndarray:
    """Exchange of two ``dim``-dimensional factors: ``|i, j> -> |j, i>``."""
    idx = np.arange(dim * dim)
    out = np.zeros((dim * dim, dim * dim))
    out[(idx % dim) * dim + idx // dim, idx] = 1.0
    return out


def twirl_exact(op: np.ndarray, dim: int) -> np.ndarray:
    """Haar average of ``(V x V)^dag op (V x V)`` for ``V`` on a ``dim``-dimensional space (second-moment Weingarten form)."""
    op = np.asarray(op)
    if op.shape != (dim * dim, dim * dim):
        raise ValueError("operator must act on two copies of the space")
    if dim == 1:
        return op.astype(complex)
    swap = swap_operator(dim)
    t, ts = np.trace(op), np.trace(op @ swap)
    norm = dim * dim - 1
    return (t - ts / dim) / norm * np.eye(dim * dim) + (ts - t / dim) / norm * swap


def twirl_estimate(op: np.ndarray, dim: int, samples: int, rng: np.random.Generator, chunk: int = 10000) -> np.ndarray:
    """Monte-Carlo mean of ``(V x V)^dag op (V x V)`` over Haar ``V``."""
    op = np.asarray(op, dtype=complex)
    total = np.zeros_like(op)
    done = 0
    while done < samples:
        n = min(chunk, samples - done)
        v = haar_unitary_batch(dim, n, rng)
        vv = np.einsum("nab,ncd->nacbd", v, v).reshape(n, dim * dim, dim * dim)
        total += (np.conj(np.swapaxes(vv, 1, 2)) @ op @ vv).sum(axis=0)
        done += n
    return total / samples
