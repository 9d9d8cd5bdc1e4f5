"""Entanglement swapping: Bell bases, single and chained swaps, and the decay bounds.

Conventions: a two-qudit pair in Schmidt form is ``sum_k a_k |k, k>``. A
measurement on two qudits in the orthonormal basis given by the columns of
``U`` yields outcome ``i`` with amplitude ``<u_i|.>``, so the unnormalized
post-measurement state of the outer qudits of ``|a>_AB |b>_CD`` is
``sum_x conj(u^i_x) a_{x1} b_{x2} |x1, x2>_AD``. Entropies are in bits.
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .circuits import bell_swap_circuit, run, triangular_forward_unitary
from .distributions import CmiReport, SitePartition, cmi, holevo_avg_entropy, measurement_distribution
from .rng import stream
from .state import (
    PureState, apply_gate_tensor, check_density_matrix, check_unitary, haar_unitary_batch,
    reduced_concurrence, ry, shannon_entropy, von_neumann_entropy,
)

ENUMERATION_LIMIT = 2**20
PROB_CUTOFF = 1e-14


@dataclass(frozen=True)
class SchmidtPair:
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float).ravel()
        if c.size < 2 or np.any(c < 0):
            raise ValueError("need at least two nonnegative Schmidt coefficients")
        if abs(np.sum(c**2) - 1) > 1e-12:
            raise ValueError("Schmidt coefficients must satisfy sum a_k^2 = 1")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def d0(self) -> int:
        return self.coeffs.size

    @classmethod
    def from_weight(cls, a0_sq: float) -> "SchmidtPair":
        """Qubit pair with ``a_0^2 = a0_sq``."""
        return cls(np.sqrt([a0_sq, 1 - a0_sq]))

    @classmethod
    def random(cls, d0: int, rng: np.random.Generator) -> "SchmidtPair":
        w = rng.dirichlet(np.ones(d0))
        return cls(np.sqrt(w / w.sum()))

    def state(self) -> PureState:
        d = self.d0
        v = np.zeros(d * d)
        v[np.arange(d) * (d + 1)] = self.coeffs
        return PureState(v, (d, d))

    def reduced(self) -> np.ndarray:
        return np.diag(self.coeffs**2).astype(complex)


def bell_basis(d: int = 2) -> np.ndarray:
    """Columns ``Phi_{a,b} = d^{-1/2} sum_x w^{a x} |x, x+b>`` at index ``a d + b``."""
    if d < 2:
        raise ValueError("d must be >= 2")
    w = np.exp(2j * np.pi / d)
    u = np.zeros((d * d, d * d), dtype=complex)
    for a, b, x in itertools.product(range(d), repeat=3):
        u[x * d + (x + b) % d, a * d + b] = w ** (a * x) / np.sqrt(d)
    return u


@dataclass(frozen=True)
class BellExpansion:
    coefficients: np.ndarray  # [i, j] -> AD state sum_k w^{-ik} a_k b_{k+j} |k, k+j>, unnormalized
    residual: float


def bell_decompose(a: SchmidtPair, b: SchmidtPair) -> BellExpansion:
    """Expand ``|a>_AB |b>_CD`` over Bell states on BC and rebuild it.

    ``|a>|b> = d^{-1/2} sum_{i,j} Phi_{ij,BC} x (sum_k w^{-ik} a_k b_{k+j} |k, k+j>)_AD``.
    The residual is the max deviation of the rebuilt ABCD tensor from the
    direct product.
    """
    if a.d0 != b.d0:
        raise ValueError("pairs must share the local dimension")
    d = a.d0
    w = np.exp(2j * np.pi / d)
    bell = bell_basis(d).reshape(d, d, d * d)  # [B, C, (i,j)]
    chi = np.zeros((d, d, d, d), dtype=complex)  # [i, j, A, D]
    for i, j, k in itertools.product(range(d), repeat=3):
        chi[i, j, k, (k + j) % d] = w ** (-i * k) * a.coeffs[k] * b.coeffs[(k + j) % d]
    rebuilt = np.einsum("bcm,mad->abcd", bell, chi.reshape(d * d, d, d)) / np.sqrt(d)
    direct = np.kron(a.state().amplitudes, b.state().amplitudes).reshape(d, d, d, d)
    return BellExpansion(chi, float(np.abs(rebuilt - direct).max()))


@dataclass(frozen=True)
class SwapOutcome:
    index: int
    prob: float
    rho_a: np.ndarray
    post_ad: np.ndarray  # normalized d0 x d0 amplitude matrix [A, D]


@dataclass(frozen=True)
class SwapResult:
    outcomes: tuple[SwapOutcome, ...]
    basis: np.ndarray = field(repr=False)

    @property
    def probs(self) -> np.ndarray:
        return np.array([o.prob for o in self.outcomes])

    def avg_entropy(self, base=2) -> float:
        return float(sum(o.prob * von_neumann_entropy(o.rho_a, base) for o in self.outcomes))


def _post_amplitudes(a: SchmidtPair, b: SchmidtPair, U: np.ndarray) -> np.ndarray:
    """Unnormalized AD amplitude matrices, shape (d0^2, d0, d0)."""
    d = a.d0
    u = np.asarray(U).reshape(d, d, d * d)  # [x1, x2, i]
    return np.einsum("xyi,x,y->ixy", u.conj(), a.coeffs, b.coeffs)


def swap_once(a: SchmidtPair, b: SchmidtPair, U: np.ndarray) -> SwapResult:
    """Measure B and C of ``|a>_AB |b>_CD`` in the basis given by the columns of ``U``."""
    if a.d0 != b.d0:
        raise ValueError("pairs must share the local dimension")
    U = np.asarray(U, dtype=complex)
    if U.shape != (a.d0**2, a.d0**2):
        raise ValueError("basis dimension must be d0^2")
    check_unitary(U)
    outcomes = []
    for i, m in enumerate(_post_amplitudes(a, b, U)):
        p = float(np.sum(np.abs(m) ** 2))
        if p > PROB_CUTOFF:
            m = m / np.sqrt(p)
            outcomes.append(SwapOutcome(i, p, m @ m.conj().T, m))
        else:
            outcomes.append(SwapOutcome(i, p, np.eye(a.d0, dtype=complex) / a.d0, np.zeros_like(m)))
    return SwapResult(tuple(outcomes), U)


def swap_statevector_oracle(a: SchmidtPair, b: SchmidtPair, U: np.ndarray) -> list[tuple[float, np.ndarray]]:
    """Same measurement done on the full four-qudit register: rotate BC by U^dag, read out BC."""
    d = a.d0
    psi = np.kron(a.state().amplitudes, b.state().amplitudes).reshape(d, d, d, d)
    psi = apply_gate_tensor(psi, np.asarray(U).conj().T, [1, 2])
    out = []
    for i in range(d * d):
        x1, x2 = divmod(i, d)
        m = psi[:, x1, x2, :]
        p = float(np.sum(np.abs(m) ** 2))
        rho = m @ m.conj().T / p if p > PROB_CUTOFF else np.eye(d) / d
        out.append((p, rho))
    return out


@dataclass(frozen=True)
class EntropyBound:
    lhs: float
    rhs: float
    p0: float
    p1: float


def binary_swap_bound(a: SchmidtPair, b: SchmidtPair) -> EntropyBound:
    """Closed-form optimum p0 S(rho0) + p1 S(rho1) for qubit pairs (lhs left at nan)."""
    if a.d0 != 2 or b.d0 != 2:
        raise ValueError("the binary bound needs qubit pairs")
    a0, a1 = a.coeffs**2
    b0, b1 = b.coeffs**2
    p0, p1 = a0 * b0 + a1 * b1, a0 * b1 + a1 * b0
    rhs = 0.0
    if p0 > 0:
        rhs += p0 * shannon_entropy([a0 * b0 / p0, a1 * b1 / p0])
    if p1 > 0:
        rhs += p1 * shannon_entropy([a0 * b1 / p1, a1 * b0 / p1])
    return EntropyBound(float("nan"), rhs, p0, p1)


def entropy_bound_check(a: SchmidtPair, b: SchmidtPair, U: np.ndarray) -> EntropyBound:
    """Average post-swap entropy of A versus its basis-independent ceiling."""
    ceiling = binary_swap_bound(a, b)
    return EntropyBound(swap_once(a, b, U).avg_entropy(2), ceiling.rhs, ceiling.p0, ceiling.p1)


def parity_conditional_entropy(a: SchmidtPair, b: SchmidtPair, U: np.ndarray) -> np.ndarray:
    """Per outcome i: H(X | x1 xor x2, I = i) in bits, X = (x1, x2) with weight |u^i_x a_x1 b_x2|^2."""
    w = np.abs(_post_amplitudes(a, b, U)) ** 2  # [i, x1, x2]
    out = np.zeros(w.shape[0])
    for i, wi in enumerate(w):
        tot = wi.sum()
        if tot <= PROB_CUTOFF:
            continue
        wi = wi / tot
        even, odd = np.array([wi[0, 0], wi[1, 1]]), np.array([wi[0, 1], wi[1, 0]])
        for grp in (even, odd):
            if grp.sum() > 0:
                out[i] += grp.sum() * shannon_entropy(grp / grp.sum())
    return out


@dataclass(frozen=True)
class ConcurrenceReport:
    per_outcome: np.ndarray  # C of the unnormalized reduced state, = p_i C(rho_i)
    closed_form: np.ndarray
    average: float
    bound: float


def post_measurement_concurrence(a: SchmidtPair, b: SchmidtPair, U: np.ndarray) -> ConcurrenceReport:
    """Concurrence of each unnormalized post-swap reduced state of A.

    ``closed_form`` evaluates
    ``2 (sum_{x1<x1', x2<x2'} |u_{x1x2} u_{x1'x2'} - u_{x1x2'} u_{x1'x2}|^2
    a_{x1}^2 a_{x1'}^2 b_{x2}^2 b_{x2'}^2)^{1/2}``; ``bound`` is
    ``4 |a0 a1| |b0 b1|`` (qubits).
    """
    d = a.d0
    mats = _post_amplitudes(a, b, U)
    if d == 2:
        # 2|det| of the unnormalized AD amplitudes avoids the cancellation in tr^2 - tr rho^2
        direct = np.array([2 * abs(np.linalg.det(m)) for m in mats])
    else:
        direct = np.array([reduced_concurrence(m @ m.conj().T) for m in mats])
    u = np.asarray(U).reshape(d, d, d * d)
    closed = np.zeros(d * d)
    for i in range(d * d):
        s = 0.0
        for x1, y1 in itertools.combinations(range(d), 2):
            for x2, y2 in itertools.combinations(range(d), 2):
                minor = u[x1, x2, i] * u[y1, y2, i] - u[x1, y2, i] * u[y1, x2, i]
                s += abs(minor) ** 2 * (a.coeffs[x1] * a.coeffs[y1] * b.coeffs[x2] * b.coeffs[y2]) ** 2
        closed[i] = 2 * np.sqrt(s)
    bound = 4 * a.coeffs[0] * a.coeffs[1] * b.coeffs[0] * b.coeffs[1] if d == 2 else float("nan")
    return ConcurrenceReport(direct, closed, float(direct.sum()), float(bound))


@dataclass(frozen=True)
class ChainResult:
    avg_entropy: float
    stderr: float
    bound: float
    paths: int
    mode: str


def _chain_step(mats: np.ndarray, weights: np.ndarray, U: np.ndarray, a: np.ndarray):
    """Branch every path over the d0^2 outcomes of measuring (R_k, L_{k+1})."""
    d = a.size
    ubar = np.asarray(U).conj().reshape(d, d, d * d)  # [r, l, i]
    new = np.einsum("pxr,rli,l->pixl", mats, ubar, a).reshape(-1, d, d)
    norms = np.einsum("pxy,pxy->p", new, new.conj()).real
    return new, norms


def chain_swap(n: int, a: SchmidtPair, bases: Sequence[np.ndarray], mode: str = "enumerate",
               samples: int = 4096, rng: np.random.Generator | None = None) -> ChainResult:
    """``n`` copies of ``|a>`` in a line, every inner pair (R_k, L_{k+1}) measured in ``bases[k]``.

    Returns the average entropy of the first qudit (bits) over all outcome
    paths. ``mode="enumerate"`` visits every path (at most 2^20); ``"sample"``
    draws ``samples`` paths sequentially and reports a standard error.
    """
    if n < 2:
        raise ValueError("need n >= 2 pairs")
    if len(bases) != n - 1:
        raise ValueError("need one basis per inner pair")
    d = a.d0
    for U in bases:
        check_unitary(U)
    bound = abs(2 * a.coeffs[0] * a.coeffs[1]) ** n if d == 2 else float("nan")
    paths = (d * d) ** (n - 1)
    if mode == "enumerate":
        if paths > ENUMERATION_LIMIT:
            raise ValueError(f"{paths} outcome paths exceed the enumeration budget; use mode='sample'")
        mats = np.diag(a.coeffs).astype(complex)[None]
        for U in bases:
            mats, norms = _chain_step(mats, None, U, a.coeffs)
        keep = norms > PROB_CUTOFF
        ent = np.array([von_neumann_entropy(m @ m.conj().T / w) for m, w in zip(mats[keep], norms[keep])])
        return ChainResult(float(np.dot(norms[keep], ent)), 0.0, float(bound), paths, mode)
    if mode != "sample":
        raise ValueError(f"unknown mode {mode!r}")
    rng = rng if rng is not None else stream(0, "chain-swap")
    vals = np.empty(samples)
    for s in range(samples):
        m = np.diag(a.coeffs).astype(complex)[None]
        for U in bases:
            branches, norms = _chain_step(m / np.linalg.norm(m), None, U, a.coeffs)
            k = rng.choice(norms.size, p=norms / norms.sum())
            m = branches[k:k + 1]
        m = m[0] / np.linalg.norm(m)
        vals[s] = von_neumann_entropy(m @ m.conj().T)
    return ChainResult(float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(samples)), float(bound), paths, mode)


def cluster_state(n: int) -> PureState:
    """Depth-2 perfect-swapping chain state on ``n`` (even) qubits."""
    return run(bell_swap_circuit(n))


def rotated_cluster_state(n: int, theta: float) -> PureState:
    r = ry(theta)
    psi = cluster_state(n).tensor()
    for k in range(n):
        psi = apply_gate_tensor(psi, r, [k])
    return PureState(psi.ravel(), (2,) * n)


@dataclass(frozen=True)
class ClusterExperiment:
    n: int
    theta: float
    cmi: CmiReport
    bound: float
    avg_entropy: float

    @property
    def ok(self) -> bool:
        return self.cmi.cmi <= self.bound + 1e-9 and self.cmi.cmi <= self.avg_entropy + 1e-9


def rotated_cluster_experiment(n: int, theta: float) -> ClusterExperiment:
    """Rotate every qubit of the swapping chain by ``ry(theta)``, read out the middle.

    A = first qubit, C = last, B = the rest. Returns the CMI (bits), the
    ceiling ``cos(theta)^(n-2)`` and the average post-measurement entropy of A.
    """
    if n % 2 or not 4 <= n <= 20:
        raise ValueError("n must be even with 4 <= n <= 20")
    if not -1e-12 <= theta <= np.pi / 2 + 1e-12:
        raise ValueError("theta must lie in [0, pi/2]")
    state = rotated_cluster_state(n, theta)
    part = SitePartition((0,), tuple(range(1, n - 1)), (n - 1,), float(n - 1))
    report = cmi(measurement_distribution(state), part, base=2)
    bound = max(np.cos(theta), 0.0) ** (n - 2)
    return ClusterExperiment(n, float(theta), report, float(bound), float(holevo_avg_entropy(state, part, 2)))


def cluster_csv(rows: Sequence[ClusterExperiment], seed: int | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["theta", "n", "cmi_bits", "bound", "avg_entropy_bits", "seed"])
    for r in rows:
        w.writerow([repr(float(r.theta)), r.n, repr(float(r.cmi.cmi)), repr(float(r.bound)), repr(float(r.avg_entropy)),
                    "" if seed is None else seed])
    return buf.getvalue()


@dataclass(frozen=True)
class ImperfectnessReport:
    epsilon: float
    f_values: np.ndarray  # [i, k, k']
    q: np.ndarray  # [i, k]
    sigma_C: np.ndarray

    def mean_offdiagonal(self) -> float:
        d = self.q.shape[1]
        mask = ~np.eye(d, dtype=bool)
        return float(self.f_values[:, mask].mean())


def _blocks(U: np.ndarray, d0: int) -> np.ndarray:
    """``M[i, k] = (<i|_B x 1_C) U (|k>_B x 1_C)``, shape (d0, d0, dC, dC)."""
    dc = U.shape[0] // d0
    return np.asarray(U).reshape(d0, dc, d0, dc).transpose(0, 2, 1, 3)


def imperfectness_f(U: np.ndarray, sigma_C: np.ndarray, d0: int | None = None) -> ImperfectnessReport:
    """Unnormalized overlaps ``f(i, k, k') = |tr(M_{ik'}^dag M_{ik} sigma_C)|^2``.

    ``d0`` is the dimension of the measured register B (defaults to
    ``dim U / dim sigma_C``). ``epsilon`` is the smallest normalized overlap
    over ``k != k'``, skipping pairs with ``q_{i,k} = 0``.
    """
    sigma_C = np.asarray(sigma_C, dtype=complex)
    check_density_matrix(sigma_C)
    U = np.asarray(U, dtype=complex)
    check_unitary(U, 1e-9)
    d0 = d0 or U.shape[0] // sigma_C.shape[0]
    if d0 * sigma_C.shape[0] != U.shape[0]:
        raise ValueError("dim U must equal d0 * dim sigma_C")
    m = _blocks(U, d0)
    gram = np.einsum("ikab,ilac,bc->ikl", m, m.conj(), sigma_C)  # tr(M_il^dag M_ik sigma)
    q = gram[:, np.arange(d0), np.arange(d0)].real
    f = np.abs(gram) ** 2
    eps = 1.0
    for i, k, k2 in itertools.product(range(d0), repeat=3):
        if k != k2 and q[i, k] > PROB_CUTOFF and q[i, k2] > PROB_CUTOFF:
            eps = min(eps, f[i, k, k2] / (q[i, k] * q[i, k2]))
    return ImperfectnessReport(float(eps), f, q, sigma_C)


def f_trace_formula(U: np.ndarray, sigma_C: np.ndarray, i: int, k: int, k2: int, d0: int) -> float:
    """Doubled-register evaluation of f, used as an independent cross-check."""
    dc = sigma_C.shape[0]
    eb = np.eye(d0)
    proj = np.kron(np.kron(np.outer(eb[i], eb[i]), np.eye(dc)), np.kron(np.outer(eb[i], eb[i]), np.eye(dc)))
    uu = np.kron(U, U)
    op = uu.conj().T @ proj @ uu
    rho = np.kron(np.kron(np.outer(eb[k], eb[k2]), sigma_C), np.kron(np.outer(eb[k2], eb[k]), sigma_C))
    return float(np.trace(op @ rho).real)


def haar_f_samples(d0: int, sigma_C: np.ndarray, samples: int, rng: np.random.Generator,
                   chunk: int = 20000) -> np.ndarray:
    """Per-unitary mean of f over all (i, k != k') for Haar-random U on B x C."""
    sigma_C = np.asarray(sigma_C, dtype=complex)
    dc = sigma_C.shape[0]
    out = []
    mask = ~np.eye(d0, dtype=bool)
    while sum(map(len, out)) < samples:
        n = min(chunk, samples - sum(map(len, out)))
        us = haar_unitary_batch(d0 * dc, n, rng).reshape(n, d0, dc, d0, dc).transpose(0, 1, 3, 2, 4)
        gram = np.einsum("nikab,nilac,bc->nikl", us, us.conj(), sigma_C)
        out.append((np.abs(gram) ** 2)[:, :, mask].mean(axis=(1, 2)))
    return np.concatenate(out)


def haar_f_expectation(d0: int, sigma_C: np.ndarray) -> float:
    """(d0 - 1)/(d0^4 - 1) tr(sigma^2)."""
    return (d0 - 1) / (d0**4 - 1) * float(np.trace(sigma_C @ sigma_C).real)


def shallow_f_samples(D: int, d: int, sigma_C: np.ndarray, samples: int, rng: np.random.Generator) -> np.ndarray:
    """Per-circuit mean of f for random forward-lightcone circuits of depth ``D``."""
    d0 = d ** (D - 1)
    vals = np.empty(samples)
    for s in range(samples):
        vals[s] = imperfectness_f(triangular_forward_unitary(D, d, rng), sigma_C, d0).mean_offdiagonal()
    return vals


def shallow_f_floor(D: int, d: int) -> float:
    return (1 / ((d * d + 1) * (d + 1))) ** (D - 1)


@dataclass(frozen=True)
class TopSchmidtReport:
    avg_top: float
    prior_top: float
    epsilon: float

    @property
    def lower_bound(self) -> float:
        return (1 - self.epsilon) * self.prior_top + self.epsilon

    @property
    def ok(self) -> bool:
        return self.avg_top >= self.lower_bound - 1e-10


def top_schmidt_growth(a: SchmidtPair, b: SchmidtPair, U: np.ndarray) -> TopSchmidtReport:
    """Apply ``U`` to BC of ``|a>_AB |b>_CD``, read out B only, track the top eigenvalue of A."""
    d0, dc = a.d0, b.d0
    U = np.asarray(U, dtype=complex)
    if U.shape != (d0 * dc, d0 * dc):
        raise ValueError("U must act on B x C")
    sigma_c = b.reduced()
    report = imperfectness_f(U, sigma_c, d0)
    psi = np.kron(a.state().amplitudes, b.state().amplitudes).reshape(d0, d0, dc, dc)
    psi = apply_gate_tensor(psi, U, [1, 2])
    avg = 0.0
    for i in range(d0):
        m = psi[:, i].reshape(d0, -1)
        p = float(np.sum(np.abs(m) ** 2))
        if p > PROB_CUTOFF:
            avg += p * np.linalg.eigvalsh(m @ m.conj().T / p)[-1]
    return TopSchmidtReport(float(avg), float(np.max(a.coeffs**2)), report.epsilon)
