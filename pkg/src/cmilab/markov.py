"""Markov factorizations of measurement distributions and the coherent Markov state.

A factorization plan lists regions ``s_1..s_M`` covering the sites; the
separator ``s'_k`` is the part of ``s_{k+1}`` already covered by
``s_1..s_k``. The factorized distribution is

    q(x) = p(x_{s_1}) prod_k p(x_{s_{k+1}}) / p(x_{s'_k}),

which equals ``p`` when every new block is conditionally independent of the
earlier sites given its separator.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .distributions import COND_CUTOFF, Distribution, SitePartition, cmi, marginal, measurement_distribution
from .state import PureState, partial_trace, von_neumann_entropy

SIGN_TOL = 1e-10


@dataclass(frozen=True)
class FactorizationPlan:
    regions: tuple[tuple[int, ...], ...]
    separators: tuple[tuple[int, ...], ...]
    cap: int | None = None
    block_scale: int = 1

    def __post_init__(self):
        regions = tuple(tuple(int(s) for s in r) for r in self.regions)
        seps = tuple(tuple(int(s) for s in r) for r in self.separators)
        if not regions:
            raise ValueError("plan needs at least one region")
        if len(seps) != len(regions) - 1:
            raise ValueError("need exactly one separator between consecutive regions")
        seen: set[int] = set(regions[0])
        for k, (reg, sep) in enumerate(zip(regions[1:], seps)):
            expected = set(reg) & seen
            if set(sep) != expected:
                raise ValueError(f"separator {k} is {sorted(sep)}, but region {k + 1} meets earlier regions on {sorted(expected)}")
            seen |= set(reg)
        if self.cap is not None and any(len(r) > self.cap for r in regions):
            raise ValueError(f"a region exceeds the size cap {self.cap}")
        object.__setattr__(self, "regions", regions)
        object.__setattr__(self, "separators", seps)

    @property
    def sites(self) -> tuple[int, ...]:
        return tuple(sorted(set().union(*map(set, self.regions))))

    def cuts(self) -> list[SitePartition]:
        """Per step: A = earlier non-separator sites, B = separator, C = new sites."""
        out = []
        seen = list(self.regions[0])
        for reg, sep in zip(self.regions[1:], self.separators):
            earlier = tuple(s for s in seen if s not in sep)
            new = tuple(s for s in reg if s not in sep)
            out.append(SitePartition(earlier, tuple(sep), new))
            seen += [s for s in reg if s not in seen]
        return out


def uniform_plan_1d(n: int, width: int) -> FactorizationPlan:
    """Regions are consecutive pairs of width-``width`` blocks; each separator is one block."""
    if width < 1 or width >= n:
        raise ValueError("need 1 <= width < n")
    blocks = [tuple(range(i, min(i + width, n))) for i in range(0, n, width)]
    regions = tuple(blocks[k] + blocks[k + 1] for k in range(len(blocks) - 1))
    seps = tuple(blocks[k + 1] for k in range(len(blocks) - 2))
    return FactorizationPlan(regions, seps, cap=2 * width, block_scale=width)


def snake_plan_2d(rows: int, cols: int, tile: tuple[int, int] = (1, 1), radius: int = 1) -> FactorizationPlan:
    """Grid plan: tiles visited row by row, alternating direction.

    Site (r, c) has index ``r * cols + c``. Region k is tile k plus every
    site of an earlier tile within Chebyshev distance ``radius`` of it.
    """
    th, tw = tile
    tiles = []
    for bi, r0 in enumerate(range(0, rows, th)):
        starts = list(range(0, cols, tw))
        for c0 in starts if bi % 2 == 0 else starts[::-1]:
            tiles.append([(r, c) for r in range(r0, min(r0 + th, rows)) for c in range(c0, min(c0 + tw, cols))])
    idx = lambda rc: rc[0] * cols + rc[1]
    regions, seps, earlier = [], [], []
    for k, t in enumerate(tiles):
        near = sorted(
            {idx(e) for e in earlier if any(max(abs(e[0] - s[0]), abs(e[1] - s[1])) <= radius for s in t)}
        )
        if k:
            seps.append(tuple(near))
        regions.append(tuple(near) + tuple(sorted(idx(s) for s in t)))
        earlier += t
    return FactorizationPlan(tuple(regions), tuple(seps), block_scale=max(th, tw))


@dataclass(frozen=True)
class FactorizedDistribution:
    plan: FactorizationPlan
    source: Distribution = field(repr=False)
    q: np.ndarray = field(repr=False)
    tv_error: float
    certificate: float
    cut_residuals: tuple[float, ...]

    def evaluate(self, outcome: Sequence[int]) -> float:
        return float(self.q[tuple(outcome)])

    def to_json(self) -> str:
        return json.dumps(
            {
                "regions": [list(r) for r in self.plan.regions],
                "separators": [list(s) for s in self.plan.separators],
                "tv_error": self.tv_error,
                "certificate": self.certificate,
            },
            indent=2,
        )


def _broadcast(dist: Distribution, sites: Sequence[int]) -> np.ndarray:
    """Marginal on ``sites`` as an array broadcastable against the full table."""
    m = marginal(dist, sorted(sites))
    shape = [dist.dims[i] if s in sites else 1 for i, s in enumerate(dist.sites)]
    return m.probs.reshape(shape)


def chain_factorize(dist: Distribution, plan: FactorizationPlan) -> FactorizedDistribution:
    """Exact q, its L1 distance to p, and the per-cut certificate that must dominate it."""
    if set(plan.sites) != set(dist.sites):
        raise ValueError("plan regions must cover exactly the distribution's sites")
    q = _broadcast(dist, plan.regions[0]).astype(float)
    for reg, sep in zip(plan.regions[1:], plan.separators):
        num = _broadcast(dist, reg)
        if sep:
            den = _broadcast(dist, sep)
            ratio = np.divide(num, den, out=np.zeros(np.broadcast_shapes(num.shape, den.shape)), where=den > COND_CUTOFF)
        else:
            ratio = num
        q = q * ratio
    q = np.broadcast_to(q, dist.probs.shape)
    tv = float(np.abs(dist.probs - q).sum())
    residuals = tuple(cmi(dist, cut).pinsker_residual for cut in plan.cuts())
    return FactorizedDistribution(plan, dist, np.array(q), tv, float(sum(residuals)), residuals)


def markov_conditionals(dist: Distribution, block: int) -> FactorizedDistribution:
    """Autoregressive form ``p(b_1) prod_k p(b_k | b_{k-1})`` over blocks of ``block`` sites."""
    n = len(dist.sites)
    if block < 1 or block >= n:
        raise ValueError("need 1 <= block < number of sites")
    order = list(dist.sites)
    plan = uniform_plan_1d(n, block)
    relabel = lambda t: tuple(order[i] for i in t)
    plan = FactorizationPlan(tuple(map(relabel, plan.regions)), tuple(map(relabel, plan.separators)),
                             plan.cap, plan.block_scale)
    return chain_factorize(dist, plan)


def relu(x):
    return np.maximum(x, 0.0)


def sawtooth(x):
    """2 relu(x) - 4 relu(x - 1/2) + 2 relu(x - 1)."""
    return 2 * relu(x) - 4 * relu(np.asarray(x) - 0.5) + 2 * relu(np.asarray(x) - 1)


def square_gadget(x):
    """x - sawtooth(x)/4; equals x^2 on {0, 1/2, 1}."""
    return np.asarray(x) - sawtooth(x) / 4


def relu_product_gadget(x, y):
    """Product of two bits from ReLUs only: 2 h((x+y)/2) - (x+y)/2."""
    m = (np.asarray(x, dtype=float) + np.asarray(y, dtype=float)) / 2
    return 2 * square_gadget(m) - m


def gadget_self_test() -> bool:
    ok = all(relu_product_gadget(x, y) == x * y for x in (0, 1) for y in (0, 1))
    return ok and [float(square_gadget(v)) for v in (0, 0.5, 1)] == [0.0, 0.25, 1.0]


@dataclass(frozen=True)
class CoherentMarkovState:
    state: PureState
    partition: SitePartition


def coherent_markov_state(dist: Distribution, partition: SitePartition) -> CoherentMarkovState:
    """``sum_x sqrt(p(a, b) p(b, c) / p(b)) |x>`` over the distribution's sites in order."""
    if set(partition.sites) != set(dist.sites) or len(partition.sites) != len(dist.sites):
        raise ValueError("A, B and C must cover every site exactly once")
    ab = _broadcast(dist, partition.A + partition.B)
    bc = _broadcast(dist, partition.B + partition.C)
    b = _broadcast(dist, partition.B) if partition.B else np.ones([1] * len(dist.sites))
    num = ab * bc
    q = np.divide(num, b, out=np.zeros(num.shape), where=b > COND_CUTOFF)
    amps = np.sqrt(q).ravel()
    return CoherentMarkovState(PureState.from_vector(amps, dist.dims), partition)


@dataclass(frozen=True)
class AreaLawReport:
    entropy_rho: float
    entropy_sigma: float
    boundary_cap: float  # |B| ln d
    entropy_b: float  # H(B) in nats
    overlap: float
    overlap_floor: float  # 1 - sqrt(I_nats / 2)
    cmi_nats: float
    trace_distance: float
    trace_distance_cap: float  # 2 sqrt(1 - overlap^2)
    fannes_gap: float
    fannes_bound: float  # nan when the trace distance exceeds 1/e

    @property
    def ok(self) -> bool:
        tol = 1e-9
        return (self.overlap >= self.overlap_floor - tol and self.entropy_sigma <= self.entropy_b + tol
                and self.entropy_b <= self.boundary_cap + tol and self.trace_distance <= self.trace_distance_cap + tol
                and (np.isnan(self.fannes_bound) or self.fannes_gap <= self.fannes_bound + tol))


def check_sign_free(state: PureState, tol: float = SIGN_TOL) -> None:
    a = state.amplitudes
    if np.abs(a.imag).max() > tol or a.real.min() < -tol:
        raise ValueError("state is not sign-free (needs real nonnegative amplitudes)")


def area_law_check(state: PureState, partition: SitePartition) -> AreaLawReport:
    """Compare ``rho_A`` of a sign-free state with ``sigma_A`` of its coherent Markov state (nats)."""
    check_sign_free(state)
    dist = measurement_distribution(state)
    phi = coherent_markov_state(dist, partition).state
    a = list(partition.A)
    rho, sigma = partial_trace(state, a), partial_trace(phi, a)
    s_rho, s_sigma = von_neumann_entropy(rho, "e"), von_neumann_entropy(sigma, "e")
    overlap = float(np.vdot(phi.amplitudes, state.amplitudes).real)
    i_nats = cmi(dist, partition, base="e").cmi
    td = float(np.abs(np.linalg.eigvalsh(rho - sigma)).sum())
    d_a = int(np.prod([state.dims[i] for i in a]))
    fannes = td * np.log(d_a) - td * np.log(td) if 0 < td <= 1 / np.e else (0.0 if td == 0 else float("nan"))
    d_b = [state.dims[i] for i in partition.B]
    return AreaLawReport(
        entropy_rho=s_rho,
        entropy_sigma=s_sigma,
        boundary_cap=float(np.sum(np.log(d_b))) if d_b else 0.0,
        entropy_b=marginal(dist, partition.B).entropy("e") if partition.B else 0.0,
        overlap=overlap,
        overlap_floor=float(1 - np.sqrt(max(i_nats, 0.0) / 2)),
        cmi_nats=i_nats,
        trace_distance=td,
        trace_distance_cap=float(2 * np.sqrt(max(1 - overlap**2, 0.0))),
        fannes_gap=abs(s_rho - s_sigma),
        fannes_bound=float(fannes),
    )
