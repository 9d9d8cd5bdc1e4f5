"""Pauli-string Hamiltonians, exact ground states and CMI-decay scans."""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .distributions import DecayFit, SitePartition, cmi, fit_cmi_length, measurement_distribution
from .state import MAX_QUBITS, PAULI_X, PAULI_Y, PAULI_Z, BudgetError, PureState, ry

MAX_MODEL_SITES = 14
DENSE_LIMIT = 2**10
SPARSE_LIMIT = 2**20
DEGENERACY_TOL = 1e-8
RESIDUAL_TOL = 1e-9

_PAULIS = {"I": np.eye(2, dtype=complex), "X": PAULI_X, "Y": PAULI_Y, "Z": PAULI_Z}


@dataclass(frozen=True)
class PauliTerm:
    """``coefficient * prod_s ops[s]``; an empty ``ops`` is the identity."""

    coefficient: float
    ops: Mapping[int, str] = field(default_factory=dict)

    def __post_init__(self):
        if not np.isfinite(self.coefficient) or self.coefficient == 0:
            raise ValueError("coefficient must be finite and nonzero")
        ops = {int(s): str(p).upper() for s, p in dict(self.ops).items()}
        for s, p in ops.items():
            if p not in ("X", "Y", "Z"):
                raise ValueError(f"unknown Pauli {p!r}")
            if s < 0:
                raise ValueError("negative site")
        object.__setattr__(self, "coefficient", float(self.coefficient))
        object.__setattr__(self, "ops", dict(sorted(ops.items())))

    def label(self, n: int) -> str:
        return "".join(self.ops.get(i, "I") for i in range(n))


@dataclass(frozen=True)
class HamiltonianSpec:
    n: int
    geometry: str
    terms: tuple[PauliTerm, ...]
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 1 or self.n > MAX_QUBITS:
            raise BudgetError(f"{self.n} qubits outside supported range")
        for t in self.terms:
            if any(s >= self.n for s in t.ops):
                raise ValueError(f"term {t} acts outside {self.n} sites")
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "params", dict(self.params))

    @property
    def dim(self) -> int:
        return 2**self.n

    def masks(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Per-term (flip mask, phase mask, number of Y, coefficient).

        Site 0 is the most significant bit. A term maps ``|x>`` to
        ``c * i^nY * (-1)^popcount(x & phase) |x ^ flip>``.
        """
        flips, phases, ny, coef = [], [], [], []
        for t in self.terms:
            f = p = y = 0
            for s, op in t.ops.items():
                bit = 1 << (self.n - 1 - s)
                if op in ("X", "Y"):
                    f |= bit
                if op in ("Z", "Y"):
                    p |= bit
                y += op == "Y"
            flips.append(f)
            phases.append(p)
            ny.append(y)
            coef.append(t.coefficient)
        return (np.array(flips, dtype=np.int64), np.array(phases, dtype=np.int64),
                np.array(ny, dtype=np.int64), np.array(coef))

    def is_real(self) -> bool:
        return all(sum(op == "Y" for op in t.ops.values()) % 2 == 0 for t in self.terms)

    def sparse(self) -> sp.csr_matrix:
        if self.dim > SPARSE_LIMIT:
            raise BudgetError(f"Hilbert space 2^{self.n} exceeds the sparse limit")
        x = np.arange(self.dim, dtype=np.int64)
        rows, cols, vals = [], [], []
        for f, p, y, c in zip(*self.masks()):
            rows.append(x ^ f)
            cols.append(x)
            vals.append(c * (1j**y) * _parity_sign(x & p))
        data = np.concatenate(vals)
        if self.is_real():
            data = data.real
        mat = sp.coo_matrix((data, (np.concatenate(rows), np.concatenate(cols))), shape=(self.dim, self.dim))
        return mat.tocsr()

    def dense(self) -> np.ndarray:
        if self.dim > 2**14:
            raise BudgetError("dense realization limited to 14 qubits")
        return self.sparse().toarray()

    def matvec(self, v: np.ndarray) -> np.ndarray:
        """H @ v for a vector or a batch of column vectors, without building H."""
        v = np.asarray(v)
        x = np.arange(self.dim, dtype=np.int64)
        out = np.zeros_like(v, dtype=complex)
        for f, p, y, c in zip(*self.masks()):
            amp = c * (1j**y) * _parity_sign(x & p)
            if v.ndim == 2:
                amp = amp[:, None]
            out[x ^ f] += amp * v
        return out

    def connected(self, configs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Sparse rows for a batch of bit-configurations.

        ``configs`` has shape (batch, n) with 0/1 entries. Returns
        ``(neighbors, elements)`` of shapes (batch, T, n) and (batch, T)
        with ``<x|H|x'> = elements`` for ``x' = neighbors``; duplicated
        neighbors are left unmerged.
        """
        configs = np.asarray(configs, dtype=np.int8)
        flips = np.zeros((len(self.terms), self.n), dtype=np.int8)
        zs = np.zeros((len(self.terms), self.n), dtype=np.int8)
        ny = np.zeros(len(self.terms))
        coef = np.array([t.coefficient for t in self.terms])
        for k, t in enumerate(self.terms):
            for s, op in t.ops.items():
                flips[k, s] = op in ("X", "Y")
                zs[k, s] = op in ("Z", "Y")
                ny[k] += op == "Y"
        # <x|P|x'> with x' = x ^ flip: P|x'> = i^nY (-1)^{x'.z} |x>
        neighbors = configs[:, None, :] ^ flips[None, :, :]
        parity = (neighbors.astype(np.int64) * zs[None]).sum(axis=2) % 2
        elements = coef[None, :] * (1j ** ny)[None, :] * (1 - 2 * parity)
        return neighbors, elements


def _parity_sign(v: np.ndarray) -> np.ndarray:
    v = v.copy()
    parity = np.zeros_like(v)
    while np.any(v):
        parity ^= v & 1
        v >>= 1
    return 1 - 2 * parity


def _check_size(n: int):
    if n > MAX_MODEL_SITES:
        raise BudgetError(f"{n} spins exceed the model limit of {MAX_MODEL_SITES}")


def tfim(n: int, J: float = 1.0, h: float = 1.0) -> HamiltonianSpec:
    """Open chain ``J sum X_i X_{i+1} + h sum Z_i``."""
    _check_size(n)
    terms = [PauliTerm(J, {i: "X", i + 1: "X"}) for i in range(n - 1) if J != 0]
    terms += [PauliTerm(h, {i: "Z"}) for i in range(n) if h != 0]
    return HamiltonianSpec(n, "chain", terms, {"J": J, "h": h})


def _heisenberg(c: float, i: int, j: int) -> list[PauliTerm]:
    # S_i . S_j with S = Pauli / 2
    return [PauliTerm(c / 4, {i: p, j: p}) for p in "XYZ"] if c != 0 else []


def ladder(rungs: int, J_par: float = 1.0, J_perp: float = 1.0, J_cross: float = 0.1) -> HamiltonianSpec:
    """Two-leg Heisenberg ladder with diagonal couplings; spin (i, j) is site 2i + j."""
    _check_size(2 * rungs)
    s = lambda i, j: 2 * i + j
    terms: list[PauliTerm] = []
    for i in range(rungs - 1):
        for j in range(2):
            terms += _heisenberg(J_par, s(i, j), s(i + 1, j))
    for i in range(rungs):
        terms += _heisenberg(J_perp, s(i, 0), s(i, 1))
    for i in range(rungs - 1):
        terms += _heisenberg(J_cross, s(i, 0), s(i + 1, 1))
        terms += _heisenberg(J_cross, s(i, 1), s(i + 1, 0))
    return HamiltonianSpec(2 * rungs, "ladder", terms, {"J_par": J_par, "J_perp": J_perp, "J_cross": J_cross})


def rydberg(rows: int, cols: int, delta: float, omega: float = 1.0, blockade: float = 1.2) -> HamiltonianSpec:
    """Rydberg array on a unit-spacing grid, site (r, c) -> r * cols + c.

    ``sum_{i<j} C/(4|r_i - r_j|^6) (1 + Z_i)(1 + Z_j) - delta/2 sum (1 + Z_i)
    - omega/2 sum X_i`` with ``C = omega * blockade^6``. Identity pieces are
    kept as a constant term so the spectrum is exact.
    """
    n = rows * cols
    _check_size(n)
    if rows * cols > 12:
        raise BudgetError("Rydberg grid limited to 12 atoms")
    c6 = omega * blockade**6
    pos = [(r, c) for r in range(rows) for c in range(cols)]
    const = 0.0
    zcoef = np.zeros(n)
    terms: list[PauliTerm] = []
    for i, j in itertools.combinations(range(n), 2):
        v = c6 / (4 * float(np.sum((np.subtract(pos[i], pos[j])) ** 2)) ** 3)
        const += v
        zcoef[i] += v
        zcoef[j] += v
        terms.append(PauliTerm(v, {i: "Z", j: "Z"}))
    const -= delta / 2 * n
    zcoef -= delta / 2
    terms += [PauliTerm(z, {i: "Z"}) for i, z in enumerate(zcoef) if abs(z) > 0]
    if omega != 0:
        terms += [PauliTerm(-omega / 2, {i: "X"}) for i in range(n)]
    if const != 0:
        terms.append(PauliTerm(const, {}))
    return HamiltonianSpec(n, f"grid{rows}x{cols}", terms, {"delta": delta, "omega": omega, "R_b": blockade})


def swap_cluster_terms(n: int) -> list[tuple[float, dict[int, str]]]:
    """Stabilizer-type terms whose common ground state is the depth-2 swapping chain."""
    if n < 4 or n % 2:
        raise ValueError("n must be even and >= 4")
    terms = [(-1.0, {k - 1: "X", k: "Z", k + 1: "X"}) for k in range(1, n - 2)]
    terms += [(-1.0, {0: "Z", 1: "X"}), (-1.0, {n - 2: "X", n - 1: "X"}),
              (-1.0, {n - 3: "X", n - 2: "Z", n - 1: "Z"})]
    return terms


def _pauli_decompose_1q(m: np.ndarray) -> dict[str, complex]:
    return {p: np.trace(_PAULIS[p] @ m) / 2 for p in "IXYZ"}


def rotated_cluster(n: int, theta: float) -> HamiltonianSpec:
    """``R^dag H R`` with ``R = ry(theta)`` on every qubit and ``H`` the swapping-chain Hamiltonian.

    At ``theta = 0`` this is the unrotated chain; the spectrum (ground energy
    ``-n``) does not depend on ``theta``.
    """
    _check_size(n)
    r = ry(theta)
    rot = {p: _pauli_decompose_1q(r.conj().T @ _PAULIS[p] @ r) for p in "XYZ"}
    acc: dict[tuple, complex] = {}
    for c, ops in swap_cluster_terms(n):
        sites = sorted(ops)
        choices = [[(q, v) for q, v in rot[ops[s]].items() if abs(v) > 1e-15] for s in sites]
        for combo in itertools.product(*choices):
            coef = c * np.prod([v for _, v in combo])
            key = tuple((s, q) for s, (q, _) in zip(sites, combo) if q != "I")
            acc[key] = acc.get(key, 0) + coef
    terms = []
    for key, coef in sorted(acc.items()):
        if abs(coef) < 1e-14:
            continue
        if abs(coef.imag) > 1e-12:
            raise AssertionError("conjugated Hamiltonian acquired a complex coefficient")
        terms.append(PauliTerm(coef.real, dict(key)))
    return HamiltonianSpec(n, "chain", terms, {"theta": float(theta)})


def build(model: str, **params) -> HamiltonianSpec:
    """Dispatch by model name: tfim, ladder, rydberg, rotated_cluster."""
    builders = {"tfim": tfim, "ladder": ladder, "rydberg": rydberg, "rotated_cluster": rotated_cluster}
    key = model.lower().replace("-", "_")
    if key not in builders:
        raise ValueError(f"unknown model {model!r}")
    return builders[key](**params)


@dataclass(frozen=True)
class GroundStateResult:
    energy: float
    state: PureState
    gap: float
    residual: float
    degenerate: bool


def _fix_phase(v: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(v)))
    return v * (abs(v[k]) / v[k])


def ground_state(spec: HamiltonianSpec) -> GroundStateResult:
    """Lowest eigenpair and gap.

    Dense ``eigh`` up to 2^10 amplitudes, ARPACK Lanczos beyond (to 2^20).
    The returned state is phase-fixed so its largest amplitude is real
    positive; for a stoquastic ``H`` all amplitudes are then nonnegative.
    """
    if spec.dim > SPARSE_LIMIT:
        raise BudgetError(f"2^{spec.n} exceeds the eigensolver budget")
    if spec.dim <= DENSE_LIMIT:
        w, v = np.linalg.eigh(spec.dense())
        e0, e1, vec = w[0], w[1] if w.size > 1 else np.inf, v[:, 0]
    else:
        mat = spec.sparse()
        v0 = np.ones(spec.dim) / np.sqrt(spec.dim)
        w, v = spla.eigsh(mat, k=2, which="SA", tol=1e-12, v0=v0 if mat.dtype.kind == "f" else v0.astype(complex))
        order = np.argsort(w)
        w, v = w[order], v[:, order]
        e0, e1, vec = w[0], w[1], v[:, 0]
    vec = _fix_phase(vec.astype(complex))
    vec /= np.linalg.norm(vec)
    if spec.is_real():
        vec = vec.real.astype(complex)
        vec /= np.linalg.norm(vec)
    residual = float(np.linalg.norm(spec.matvec(vec) - e0 * vec))
    if residual > RESIDUAL_TOL:
        raise RuntimeError(f"eigensolver residual {residual:.2e} above {RESIDUAL_TOL}")
    gap = float(e1 - e0)
    return GroundStateResult(float(e0), PureState(vec), gap, residual, gap < DEGENERACY_TOL)


def shell_partitions(dist_to_a: Sequence[float], a: Sequence[int], dists: Sequence[int]) -> list[SitePartition]:
    """Grow B as the shell ``0 < dist < d`` around A; C is the shell ``dist == d``."""
    dist_to_a = np.asarray(dist_to_a)
    out = []
    for d in dists:
        b = tuple(int(i) for i in np.flatnonzero((dist_to_a > 0) & (dist_to_a < d)) if i not in a)
        c = tuple(int(i) for i in np.flatnonzero(dist_to_a == d))
        if not c:
            raise ValueError(f"no sites at distance {d}")
        out.append(SitePartition(tuple(a), b, c, float(d)))
    return out


def default_partitions(spec: HamiltonianSpec, dists: Sequence[int]) -> list[SitePartition]:
    """Declared region schedule per geometry.

    chain: A = site 0, C = site d. ladder: A = rung 0, C = rung d.
    grid: A = corner atom, shells in Manhattan distance.
    """
    n = spec.n
    if spec.geometry == "chain":
        return shell_partitions(np.arange(n), (0,), dists)
    if spec.geometry == "ladder":
        return shell_partitions(np.arange(n) // 2, (0, 1), dists)
    if spec.geometry.startswith("grid"):
        rows, cols = (int(v) for v in spec.geometry[4:].split("x"))
        d = [r + c for r in range(rows) for c in range(cols)]
        return shell_partitions(d, (0,), dists)
    raise ValueError(f"no default schedule for geometry {spec.geometry!r}")


@dataclass
class ScanRow:
    model: str
    params: str
    dist: float
    cmi_bits: float
    gap: float
    xi: float


@dataclass
class ScanResult:
    rows: list[ScanRow]
    fits: dict[str, DecayFit]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "params", "dist", "cmi_bits", "gap", "xi"])
        for r in self.rows:
            w.writerow([r.model, r.params, repr(float(r.dist)), repr(float(r.cmi_bits)), repr(float(r.gap)), repr(float(r.xi))])
        return buf.getvalue()


def params_label(params: Mapping[str, float]) -> str:
    return ";".join(f"{k}={v:g}" for k, v in params.items())


def cmi_decay_scan(specs: Sequence[tuple[str, HamiltonianSpec]], dists: Sequence[int],
                   partitions=None) -> ScanResult:
    """CMI of the ground-state distribution versus dist(A, C) for each Hamiltonian.

    ``partitions`` maps a spec to its schedule (``default_partitions`` if
    omitted). Degenerate ground spaces are refused.
    """
    rows: list[ScanRow] = []
    fits: dict[str, DecayFit] = {}
    for model, spec in specs:
        gs = ground_state(spec)
        if gs.degenerate:
            raise ValueError(f"{model} {params_label(spec.params)}: ground state not unique (gap {gs.gap:.2e})")
        parts = partitions(spec) if partitions else default_partitions(spec, dists)
        dist = measurement_distribution(gs.state)
        pts = [(p.distance, cmi(dist, p).cmi) for p in parts]
        fit = fit_cmi_length(pts) if len(pts) >= 3 else None
        label = params_label(spec.params)
        fits[f"{model}:{label}"] = fit
        xi = fit.xi if fit is not None else float("nan")
        rows += [ScanRow(model, label, d, c, gs.gap, xi) for d, c in pts]
    return ScanResult(rows, fits)
