"""Exact discrete distributions over measurement outcomes.

A :class:`Distribution` is a dense probability tensor whose axes are labelled
by site indices. Everything here is exact enumeration; nothing is estimated
from samples.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .state import PureState, partial_trace, shannon_entropy, von_neumann_entropy

PROB_TOL = 1e-10
COND_CUTOFF = 1e-14
FIT_FLOOR = 1e-12
SLOPE_TOL = 1e-12  # roundoff on flat series


@dataclass(frozen=True)
class Distribution:
    sites: tuple[int, ...]
    dims: tuple[int, ...]
    probs: np.ndarray

    def __post_init__(self):
        sites = tuple(int(s) for s in self.sites)
        dims = tuple(int(d) for d in self.dims)
        probs = np.asarray(self.probs, dtype=float).reshape(dims) if dims else np.asarray(self.probs, dtype=float).reshape(())
        if len(sites) != len(dims) or len(set(sites)) != len(sites):
            raise ValueError("sites must be distinct and match dims")
        if np.any(probs < -PROB_TOL):
            raise ValueError("negative probabilities")
        if abs(probs.sum() - 1.0) > PROB_TOL:
            raise ValueError(f"probabilities sum to {probs.sum()}, not 1")
        probs = np.clip(probs, 0.0, None)
        probs.setflags(write=False)
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "probs", probs)

    def axes(self, sites: Iterable[int]) -> list[int]:
        lookup = {s: i for i, s in enumerate(self.sites)}
        try:
            return [lookup[int(s)] for s in sites]
        except KeyError as exc:
            raise ValueError(f"site {exc.args[0]} not in distribution {self.sites}") from None

    def prob(self, outcome: Sequence[int]) -> float:
        return float(self.probs[tuple(outcome)])

    def entropy(self, base=2) -> float:
        return shannon_entropy(self.probs, base)

    def to_csv(self) -> str:
        """``outcome,prob`` rows with the outcome as a digit string (site order)."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["outcome", "prob"])
        for idx in np.ndindex(*self.dims):
            p = self.probs[idx]
            if p > 0:
                w.writerow(["".join(str(d) for d in idx), repr(float(p))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, sites: Sequence[int] | None = None, dims: Sequence[int] | None = None) -> "Distribution":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise ValueError("empty distribution")
        n = len(rows[0]["outcome"])
        dims = tuple(dims) if dims is not None else (2,) * n
        sites = tuple(sites) if sites is not None else tuple(range(n))
        probs = np.zeros(dims)
        for row in rows:
            probs[tuple(int(c) for c in row["outcome"])] = float(row["prob"])
        return cls(sites, dims, probs)


@dataclass(frozen=True)
class SitePartition:
    """Disjoint site sets A, B, C plus the lattice distance between A and C."""

    A: tuple[int, ...]
    B: tuple[int, ...]
    C: tuple[int, ...]
    distance: float | None = None

    def __post_init__(self):
        a, b, c = (tuple(int(s) for s in x) for x in (self.A, self.B, self.C))
        if set(a) & set(b) or set(a) & set(c) or set(b) & set(c):
            raise ValueError("partition sets overlap")
        if any(s < 0 for s in a + b + c):
            raise ValueError("negative site index")
        if self.distance is not None and self.distance < 0:
            raise ValueError("distance must be nonnegative")
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "B", b)
        object.__setattr__(self, "C", c)

    @property
    def sites(self) -> tuple[int, ...]:
        return self.A + self.B + self.C


def chain_partition(a: Sequence[int], c: Sequence[int]) -> SitePartition:
    """1D tripartition with B = every site strictly between A and C."""
    lo, hi = max(a), min(c)
    if lo >= hi:
        raise ValueError("A must lie to the left of C")
    return SitePartition(tuple(a), tuple(range(lo + 1, hi)), tuple(c), distance=float(hi - lo))


@dataclass(frozen=True)
class CmiReport:
    cmi: float
    base: object
    pinsker_residual: float
    definitional: float
    partition: SitePartition

    @property
    def cmi_nats(self) -> float:
        return self.cmi * _nats_per_unit(self.base)


@dataclass(frozen=True)
class DecayFit:
    xi: float
    alpha: float
    residual: float
    diverged: bool
    vanished: bool = False
    points: tuple = field(default=(), repr=False)


def _nats_per_unit(base) -> float:
    if base == "e" or base == np.e:
        return 1.0
    return float(np.log(base))


def _log(x, base):
    return np.log(x) / _nats_per_unit(base)


def measurement_distribution(state: PureState, sites: Sequence[int] | None = None) -> Distribution:
    """Born distribution of ``state`` marginalized onto ``sites`` (all by default)."""
    if sites is None:
        sites = range(state.n_sites)
    sites = [int(s) for s in sites]
    probs = np.abs(state.tensor()) ** 2
    full = Distribution(tuple(range(state.n_sites)), state.dims, probs / probs.sum())
    return marginal(full, sites)


def marginal(dist: Distribution, sites: Sequence[int]) -> Distribution:
    axes = dist.axes(sites)
    drop = tuple(i for i in range(len(dist.sites)) if i not in axes)
    p = dist.probs.sum(axis=drop) if drop else dist.probs
    kept = sorted(axes)
    p = np.transpose(p, [kept.index(a) for a in axes]) if axes else p
    return Distribution(tuple(int(s) for s in sites), tuple(dist.dims[a] for a in axes), p)


def conditional(dist: Distribution, target: Sequence[int], given: Sequence[int], value: Sequence[int]) -> Distribution:
    """p(x_target | x_given = value)."""
    if set(target) & set(given):
        raise ValueError("target and given overlap")
    joint = marginal(dist, list(given) + list(target))
    value = tuple(int(v) for v in value)
    p_given = joint.probs[value].sum() if given else 1.0
    if p_given < COND_CUTOFF:
        raise ValueError(f"conditioning on outcome {value} of probability {p_given}")
    return Distribution(tuple(target), joint.dims[len(given):], joint.probs[value] / p_given)


def kl_divergence(p: Distribution, q: Distribution, base=2) -> float:
    """D(p || q); ``inf`` when p is not supported inside q."""
    if p.sites != q.sites or p.dims != q.dims:
        raise ValueError("distributions are over different sites")
    mask = p.probs > 0
    if np.any(q.probs[mask] <= 0):
        return float("inf")
    val = float(np.sum(p.probs[mask] * _log(p.probs[mask] / q.probs[mask], base)))
    return max(val, 0.0)


def total_variation(p: Distribution, q: Distribution) -> float:
    """L1 distance sum |p - q| (no factor 1/2)."""
    if p.sites != q.sites:
        q = marginal(q, p.sites)
    return float(np.abs(p.probs - q.probs).sum())


def _grouped(dist: Distribution, part: SitePartition) -> np.ndarray:
    """Joint table reshaped to (|A|, |B|, |C|) outcome axes, other sites summed out."""
    m = marginal(dist, part.A + part.B + part.C)
    dims = m.dims
    na, nb = len(part.A), len(part.B)
    size = lambda ds: int(np.prod(ds)) if ds else 1
    return m.probs.reshape(size(dims[:na]), size(dims[na:na + nb]), size(dims[na + nb:]))


def cmi_table(p_abc: np.ndarray, base=2) -> tuple[float, float, float]:
    """CMI, definitional CMI and Pinsker residual for a (A, B, C) table."""
    h = lambda t: shannon_entropy(t, base)
    p_ab = p_abc.sum(axis=2)
    p_bc = p_abc.sum(axis=0)
    p_b = p_bc.sum(axis=1)
    four = h(p_ab) + h(p_bc) - h(p_b) - h(p_abc)

    keep = p_b >= COND_CUTOFF
    pabc, pab, pbc, pb = p_abc[:, keep], p_ab[:, keep], p_bc[keep], p_b[keep]
    prod = pab[:, :, None] * pbc[None, :, :] / pb[None, :, None]
    mask = pabc > 0
    definitional = float(np.sum(pabc[mask] * _log(pabc[mask] / prod[mask], base)))
    residual = float(np.abs(pabc - prod).sum())
    return max(four, 0.0), definitional, residual


def cmi(dist: Distribution, partition: SitePartition, base=2) -> CmiReport:
    """I(A:C|B) via the four-entropy identity, cross-checked against E_B KL.

    An empty B gives the plain mutual information.
    """
    val, definitional, residual = cmi_table(_grouped(dist, partition), base)
    return CmiReport(val, base, residual, definitional, partition)


def holevo_avg_entropy(state: PureState, partition: SitePartition, base=2) -> float:
    """E_{x_B} S(rho_{A | x_B}): the average post-measurement entropy of A."""
    a, b = list(partition.A), list(partition.B)
    rest = [i for i in range(state.n_sites) if i not in a and i not in b]
    psi = np.transpose(state.tensor(), b + a + rest)
    db = int(np.prod([state.dims[i] for i in b])) if b else 1
    da = int(np.prod([state.dims[i] for i in a]))
    psi = psi.reshape(db, da, -1)
    total = 0.0
    for block in psi:
        rho = block @ block.conj().T
        pb = np.trace(rho).real
        if pb < COND_CUTOFF:
            continue
        total += pb * von_neumann_entropy(rho / pb, base)
    return total


def reduced_entropy(state: PureState, sites: Sequence[int], base=2) -> float:
    return von_neumann_entropy(partial_trace(state, sites), base)


def fit_cmi_length(points: Sequence[tuple[float, float]], floor: float = FIT_FLOOR) -> DecayFit:
    """Least-squares fit of log(cmi) = log(alpha) - dist/xi.

    Points below ``floor`` are dropped. A nonnegative slope marks the series
    as diverged (no finite CMI length); if fewer than two points survive the
    floor the series is flagged as vanished.
    """
    pts = [(float(d), float(c)) for d, c in points]
    if len(pts) < 3:
        raise ValueError("need at least three points")
    ds = [d for d, _ in pts]
    if any(b <= a for a, b in zip(ds, ds[1:])):
        raise ValueError("distances must be strictly increasing")
    kept = [(d, c) for d, c in pts if c > floor]
    if len(kept) < 2:
        return DecayFit(float("nan"), float("nan"), float("nan"), False, True, tuple(pts))
    x = np.array([d for d, _ in kept])
    y = np.log([c for _, c in kept])
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    if slope >= -SLOPE_TOL:
        return DecayFit(float("inf"), float(np.exp(intercept)), resid, True, False, tuple(pts))
    return DecayFit(float(-1 / slope), float(np.exp(intercept)), resid, False, False, tuple(pts))
