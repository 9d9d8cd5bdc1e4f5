"""Random real MPS and PEPS with shifted-Gaussian entries, their amplitudes and CMI scans."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .distributions import DecayFit, SitePartition, cmi, fit_cmi_length, measurement_distribution
from .rng import stream
from .state import BudgetError, PureState

MAX_MPS_SITES = 20
MAX_PEPS_SITES = 16
MAX_PEPS_SITES_HIGH_MEMORY = 25
NORM_GUARD = 1e-300


@dataclass(frozen=True)
class MpsState:
    """Site ``k`` tensor has shape ``(r_{k-1}, d, r_k)`` with unit boundary bonds."""

    tensors: tuple[np.ndarray, ...] = field(repr=False)
    r: int
    mu: float = 0.0

    def __post_init__(self):
        ts = tuple(np.asarray(t, dtype=float) for t in self.tensors)
        if ts[0].shape[0] != 1 or ts[-1].shape[2] != 1:
            raise ValueError("boundary bonds must have dimension 1")
        for left, right in zip(ts, ts[1:]):
            if left.shape[2] != right.shape[0]:
                raise ValueError("bond dimensions do not match")
        object.__setattr__(self, "tensors", ts)

    @property
    def n(self) -> int:
        return len(self.tensors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(t.shape[1] for t in self.tensors)


@dataclass(frozen=True)
class PepsState:
    """``tensors[i][j]`` has shape ``(d, up, down, left, right)``; open boundaries have bond 1."""

    tensors: tuple[tuple[np.ndarray, ...], ...] = field(repr=False)
    r: int
    mu: float = 0.0

    def __post_init__(self):
        ts = tuple(tuple(np.asarray(t, dtype=float) for t in row) for row in self.tensors)
        rows, cols = len(ts), len(ts[0])
        for i in range(rows):
            for j in range(cols):
                t = ts[i][j]
                if (i == 0 and t.shape[1] != 1) or (i == rows - 1 and t.shape[2] != 1):
                    raise ValueError("open boundary needs unit vertical bonds")
                if (j == 0 and t.shape[3] != 1) or (j == cols - 1 and t.shape[4] != 1):
                    raise ValueError("open boundary needs unit horizontal bonds")
                if i + 1 < rows and t.shape[2] != ts[i + 1][j].shape[1]:
                    raise ValueError("vertical bond mismatch")
                if j + 1 < cols and t.shape[4] != ts[i][j + 1].shape[3]:
                    raise ValueError("horizontal bond mismatch")
        object.__setattr__(self, "tensors", ts)

    @property
    def rows(self) -> int:
        return len(self.tensors)

    @property
    def cols(self) -> int:
        return len(self.tensors[0])

    @property
    def n(self) -> int:
        return self.rows * self.cols


def random_mps(n: int, r: int, mu: float = 0.0, seed: int = 0, d: int = 2) -> MpsState:
    """Every entry i.i.d. ``N(mu, 1)``; inner bonds have dimension ``r``."""
    if n > MAX_MPS_SITES:
        raise BudgetError(f"MPS limited to {MAX_MPS_SITES} sites")
    if n < 2 or r < 1:
        raise ValueError("need n >= 2 and r >= 1")
    rng = stream(seed, "mps")
    bonds = [1] + [r] * (n - 1) + [1]
    return MpsState(tuple(rng.normal(mu, 1.0, (bonds[k], d, bonds[k + 1])) for k in range(n)), r, mu)


def random_peps(rows: int, cols: int, r: int, mu: float = 0.0, seed: int = 0, d: int = 2,
                high_memory: bool = False) -> PepsState:
    """Entries i.i.d. ``N(mu, 1)``; grids above 16 sites need ``high_memory=True`` (up to 25)."""
    limit = MAX_PEPS_SITES_HIGH_MEMORY if high_memory else MAX_PEPS_SITES
    if rows * cols > limit:
        raise BudgetError(f"{rows}x{cols} PEPS exceeds the {limit}-site dense budget")
    rng = stream(seed, "peps")
    b = lambda edge: 1 if edge else r
    tensors = tuple(
        tuple(rng.normal(mu, 1.0, (d, b(i == 0), b(i == rows - 1), b(j == 0), b(j == cols - 1))) for j in range(cols))
        for i in range(rows)
    )
    return PepsState(tensors, r, mu)


def _mps_vector(tn: MpsState) -> np.ndarray:
    acc = tn.tensors[0].reshape(-1, tn.tensors[0].shape[2])
    for t in tn.tensors[1:]:
        acc = np.einsum("pa,aqb->pqb", acc, t).reshape(-1, t.shape[2])
    return acc.ravel()


def _peps_vector(tn: PepsState) -> np.ndarray:
    """Row-by-row contraction; the open bond list is the row's down bonds."""
    acc = np.ones((1, 1))  # (physical so far, down bonds of previous row)
    for row in tn.tensors:
        cur = row[0][..., 0, :]  # (p, u, d, right)
        cur = cur.reshape(cur.shape[0], cur.shape[1], cur.shape[2], cur.shape[3])
        for t in row[1:]:
            cur = np.einsum("PUDl,puqlr->PpUuDqr", cur, t)
            s = cur.shape
            cur = cur.reshape(s[0] * s[1], s[2] * s[3], s[4] * s[5], s[6])
        cur = cur[..., 0]
        acc = np.einsum("Au,PuD->APD", acc, cur).reshape(-1, cur.shape[2])
    return acc.ravel()


def raw_vector(tn) -> np.ndarray:
    """Unnormalized amplitude vector (site 0 most significant)."""
    if isinstance(tn, MpsState):
        return _mps_vector(tn)
    if isinstance(tn, PepsState):
        return _peps_vector(tn)
    raise TypeError(f"unsupported network {type(tn).__name__}")


def to_statevector(tn) -> PureState:
    v = raw_vector(tn)
    norm = np.linalg.norm(v)
    if norm < NORM_GUARD:
        raise ValueError("network contracts to the zero vector")
    dims = tn.dims if isinstance(tn, MpsState) else tuple(t.shape[0] for row in tn.tensors for t in row)
    return PureState(v / norm, dims)


def amplitude(tn, x: Sequence[int], direction: str = "left") -> float:
    """Unnormalized amplitude of bitstring ``x``.

    For an MPS this is a product of bond matrices, swept from the left or
    the right; for a PEPS the bonds are contracted row by row.
    """
    x = [int(v) for v in x]
    if isinstance(tn, MpsState):
        mats = [t[:, xi, :] for t, xi in zip(tn.tensors, x)]
        if direction == "left":
            acc = mats[0]
            for m in mats[1:]:
                acc = acc @ m
        elif direction == "right":
            acc = mats[-1]
            for m in mats[-2::-1]:
                acc = m @ acc
        else:
            raise ValueError("direction must be 'left' or 'right'")
        return float(acc[0, 0])
    if isinstance(tn, PepsState):
        acc = np.ones(1)
        k = 0
        for row in tn.tensors:
            cur = row[0][x[k]][:, :, 0, :]  # (u, d, right)
            k += 1
            for t in row[1:]:
                cur = np.einsum("UDl,uqlr->UuDqr", cur, t[x[k]])
                s = cur.shape
                cur = cur.reshape(s[0] * s[1], s[2] * s[3], s[4])
                k += 1
            acc = acc @ cur[..., 0]
        return float(acc[0])
    raise TypeError(f"unsupported network {type(tn).__name__}")


def sign_report(tn) -> float:
    """Fraction of strictly positive amplitudes after fixing the global sign."""
    v = raw_vector(tn)
    v = v * np.sign(v[np.argmax(np.abs(v))])
    return float(np.mean(v > 0))


@dataclass
class TnExperiment:
    family: str
    r: int
    mu: float
    rows: list[tuple]  # family, r, mu, seed, dist, cmi_bits, positive_fraction
    medians: dict[int, float]
    fit: DecayFit | None
    geometry: dict

    def to_csv(self, header: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(["family", "r", "mu", "seed", "dist", "cmi_bits", "positive_fraction"])
        for fam, r, mu, seed, dist, c, pos in self.rows:
            w.writerow([fam, r, repr(float(mu)), seed, dist, repr(float(c)), repr(float(pos))])
        return buf.getvalue()


def mps_partitions(n: int, dists: Sequence[int]) -> list[SitePartition]:
    """A = site 0, B = sites 1..d-1, C = site d; sites beyond C are marginalized."""
    return [SitePartition((0,), tuple(range(1, d)), (d,), float(d)) for d in dists if d < n]


def peps_partitions(rows: int, cols: int, dists: Sequence[int]) -> list[SitePartition]:
    """A = corner (0,0); B = sites with 0 < i+j < d; C = the site with i+j = d nearest the diagonal."""
    coords = [(i, j) for i in range(rows) for j in range(cols)]
    out = []
    for d in dists:
        b = tuple(k for k, (i, j) in enumerate(coords) if 0 < i + j < d)
        shell = [k for k, (i, j) in enumerate(coords) if i + j == d]
        if not shell:
            raise ValueError(f"no site at distance {d}")
        c = min(shell, key=lambda k: (abs(coords[k][0] - coords[k][1]), k))
        out.append(SitePartition((0,), b, (c,), float(d)))
    return out


def tn_cmi_experiment(family: str, r: int, mu: float, seeds: Sequence[int], n: int = 12,
                      shape: tuple[int, int] = (4, 4), dists: Sequence[int] | None = None) -> TnExperiment:
    """Exact CMI versus distance for one (r, mu) over many random networks."""
    family = family.upper()
    if family == "MPS":
        dists = list(dists or range(1, n))
        parts = mps_partitions(n, dists)
        make = lambda s: random_mps(n, r, mu, s)
        geometry = {"n": n, "A": "site 0", "B": "sites 1..d-1", "C": "site d"}
    elif family == "PEPS":
        rows, cols = shape
        dists = list(dists or range(1, rows + cols - 1))
        parts = peps_partitions(rows, cols, dists)
        make = lambda s: random_peps(rows, cols, r, mu, s)
        geometry = {"shape": [rows, cols], "A": "corner", "B": "0 < i+j < d", "C": "i+j = d nearest diagonal"}
    else:
        raise ValueError(f"unknown family {family!r}")
    rows_out = []
    for s in seeds:
        tn = make(s)
        dist = measurement_distribution(to_statevector(tn))
        pos = sign_report(tn)
        rows_out += [(family, r, mu, s, int(p.distance), cmi(dist, p).cmi, pos) for p in parts]
    medians = {int(p.distance): float(np.median([row[5] for row in rows_out if row[4] == p.distance])) for p in parts}
    fit = fit_cmi_length(sorted(medians.items())) if len(medians) >= 3 else None
    return TnExperiment(family, r, mu, rows_out, medians, fit, geometry)
