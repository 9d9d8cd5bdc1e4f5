"""Random 1D brickwork circuits, lightcone blocks and region-CMI scans.

Layers are numbered from 1. Odd layers act on pairs ``(2i, 2i+1)`` and even
layers on ``(2i-1, 2i)`` (0-indexed sites).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .distributions import DecayFit, SitePartition, cmi, fit_cmi_length, measurement_distribution
from .rng import stream
from .state import (
    CNOT, HADAMARD, MAX_QUBITS, BudgetError, PureState, apply_gate_tensor, check_unitary, haar_unitary,
)


@dataclass(frozen=True)
class Gate:
    layer: int
    sites: tuple[int, int]
    matrix: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class BrickworkCircuit:
    n: int
    d: int
    D: int
    gates: tuple[Gate, ...]
    seed: int | None = None

    def __post_init__(self):
        for g in self.gates:
            a, b = g.sites
            if b != a + 1 or not 0 <= a < self.n - 1:
                raise ValueError(f"gate on {g.sites} is not a nearest-neighbour pair")
            if a % 2 != (g.layer + 1) % 2:
                raise ValueError(f"gate on {g.sites} breaks the brickwork parity of layer {g.layer}")
            if not 1 <= g.layer <= self.D:
                raise ValueError(f"layer {g.layer} outside depth {self.D}")
        object.__setattr__(self, "gates", tuple(sorted(self.gates, key=lambda g: (g.layer, g.sites))))

    def layer(self, t: int) -> list[Gate]:
        return [g for g in self.gates if g.layer == t]


def brickwork_pairs(n: int, t: int) -> list[tuple[int, int]]:
    start = 0 if t % 2 == 1 else 1
    return [(a, a + 1) for a in range(start, n - 1, 2)]


def _check_budget(n: int, d: int):
    if n * np.log2(d) > MAX_QUBITS + 1e-9:
        raise BudgetError(f"{n} sites of dimension {d} exceed the dense budget")


def random_brickwork(n: int, D: int, d: int = 2, seed: int = 0) -> BrickworkCircuit:
    """Depth-``D`` brickwork with i.i.d. Haar two-qudit gates."""
    if n < 2 or D < 1 or d < 2:
        raise ValueError("need n >= 2, D >= 1, d >= 2")
    _check_budget(n, d)
    rng = stream(seed, "brickwork")
    gates = [Gate(t, p, haar_unitary(d * d, rng)) for t in range(1, D + 1) for p in brickwork_pairs(n, t)]
    return BrickworkCircuit(n, d, D, tuple(gates), seed)


def bell_swap_circuit(n: int) -> BrickworkCircuit:
    """Depth-2 perfect-swapping chain: EPR pairs, then Bell-basis rotations.

    Layer 1 prepares ``(|00> + |11>)/sqrt 2`` on ``(2i, 2i+1)``; layer 2
    applies ``(H x 1) CNOT`` on ``(2i-1, 2i)`` so a computational-basis
    readout of those pairs is a Bell measurement.
    """
    if n < 2 or n % 2:
        raise ValueError("n must be even")
    prep = CNOT @ np.kron(HADAMARD, np.eye(2))
    bell = np.kron(HADAMARD, np.eye(2)) @ CNOT
    gates = [Gate(1, p, prep) for p in brickwork_pairs(n, 1)]
    gates += [Gate(2, p, bell) for p in brickwork_pairs(n, 2) if p[1] < n - 1]
    return BrickworkCircuit(n, 2, 2, tuple(gates))


def run(circuit: BrickworkCircuit, gates: Sequence[Gate] | None = None) -> PureState:
    """Apply the circuit (or an explicit gate sequence) to ``|0...0>``."""
    _check_budget(circuit.n, circuit.d)
    psi = np.zeros((circuit.d,) * circuit.n, dtype=complex)
    psi[(0,) * circuit.n] = 1.0
    for g in circuit.gates if gates is None else gates:
        psi = apply_gate_tensor(psi, g.matrix, g.sites)
    return PureState(psi.ravel(), (circuit.d,) * circuit.n)


@dataclass(frozen=True)
class LightconeDecomposition:
    """Backward blocks ``V`` on ``L_i + R_i`` and forward blocks ``U`` on ``R_i + L_{i+1}``.

    ``blocks[i]`` lists the sites of ``(L_i, R_i)``. Gates of the outer
    half-cones at the two chain ends are folded into ``V_1`` and ``V_last``.
    ``padded`` counts identity wires appended to reach ``n = 2 n' (D-1)``.
    """

    V: tuple[tuple[Gate, ...], ...]
    U: tuple[tuple[Gate, ...], ...]
    blocks: tuple[tuple[tuple[int, ...], tuple[int, ...]], ...]
    n: int
    padded: int
    circuit: BrickworkCircuit

    def reconstruct(self) -> PureState:
        """All V blocks on ``|0>``, then all U blocks; padded wires traced off."""
        c = self.circuit
        order = [g for block in self.V for g in block] + [g for block in self.U for g in block]
        padded = BrickworkCircuit(self.n, c.d, c.D, tuple(order))
        out = run(padded, order)
        if not self.padded:
            return out
        t = out.tensor()[(Ellipsis,) + (0,) * self.padded]
        return PureState(t.ravel(), (c.d,) * (self.n - self.padded))


def _in_backward(t: int, a: int, D: int, w: int, i: int) -> bool:
    lo, hi = i * 2 * w + (t - 1), i * 2 * w + 2 * w - 1 - (t - 1)
    return t <= D - 1 and a >= lo and a + 1 <= hi


def _in_forward(t: int, a: int, w: int, i: int) -> bool:
    centre = i * 2 * w + 2 * w - 1  # last site of R_i
    j = t - 1
    return j >= 1 and a >= centre + 1 - j and a + 1 <= centre + j


def lightcone_decompose(circuit: BrickworkCircuit, pad: bool = False) -> LightconeDecomposition:
    """Split the gates into triangular backward and inverted forward lightcones."""
    n, D, d = circuit.n, circuit.D, circuit.d
    if D == 1:
        V = tuple((g,) for g in circuit.gates)
        blocks = tuple(((g.sites[0],), (g.sites[1],)) for g in circuit.gates)
        return LightconeDecomposition(V, (), blocks, n, 0, circuit)
    w = D - 1
    extra = (-n) % (2 * w)
    if extra and not pad:
        raise ValueError(f"n = {n} is not a multiple of 2(D-1) = {2 * w}; pass pad=True")
    gates = list(circuit.gates)
    if extra:
        _check_budget(n + extra, d)
        have = {(g.layer, g.sites) for g in gates}
        eye = np.eye(d * d, dtype=complex)
        for t in range(1, D + 1):
            gates += [Gate(t, p, eye) for p in brickwork_pairs(n + extra, t) if (t, p) not in have]
    m = n + extra
    n_blocks = m // (2 * w)
    V: list[list[Gate]] = [[] for _ in range(n_blocks)]
    U: list[list[Gate]] = [[] for _ in range(n_blocks - 1)]
    for g in sorted(gates, key=lambda g: (g.layer, g.sites)):
        t, a = g.layer, g.sites[0]
        home = min(a // (2 * w), n_blocks - 1)
        if _in_backward(t, a, D, w, home):
            V[home].append(g)
            continue
        fwd = [i for i in range(n_blocks - 1) if _in_forward(t, a, w, i)]
        if fwd:
            U[fwd[0]].append(g)
        elif home == 0 or home == n_blocks - 1:
            V[home].append(g)
        else:
            raise AssertionError(f"gate {g.sites} in layer {t} fits no lightcone")
    blocks = tuple(
        (tuple(range(i * 2 * w, i * 2 * w + w)), tuple(range(i * 2 * w + w, (i + 1) * 2 * w)))
        for i in range(n_blocks)
    )
    full = BrickworkCircuit(m, d, D, tuple(gates), circuit.seed) if extra else circuit
    return LightconeDecomposition(tuple(map(tuple, V)), tuple(map(tuple, U)), blocks, m, extra, full)


def triangular_gate_slots(D: int) -> list[tuple[int, tuple[int, int]]]:
    """(level, pair) slots of an inverted-triangle forward lightcone on 2(D-1) sites."""
    if D < 2:
        raise ValueError("forward lightcones need D >= 2")
    w = D - 1
    return [(j, (w - j + 2 * m, w - j + 2 * m + 1)) for j in range(1, D) for m in range(j)]


def triangular_forward_unitary(D: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """Dense unitary of a forward lightcone with independent Haar gates.

    Acts on ``2(D-1)`` qudits; the first ``D-1`` are the left half (``R_i``).
    """
    m = 2 * (D - 1)
    dim = d**m
    if m > 12:
        raise BudgetError("triangular unitary too large for a dense matrix")
    t = np.eye(dim, dtype=complex).reshape((d,) * m + (dim,))
    for _, pair in triangular_gate_slots(D):
        t = apply_gate_tensor(t, haar_unitary(d * d, rng), pair)
    u = t.reshape(dim, dim)
    check_unitary(u, 1e-9)
    return u


@dataclass
class RegionScan:
    separations: tuple[int, ...]
    rows: list[tuple[int, int, int, float]]  # trial, seed, separation, cmi_bits
    median: dict[int, float]
    mean: dict[int, float]
    fit: DecayFit | None
    manifest: dict

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["trial", "seed", "separation", "cmi_bits"])
        for r in self.rows:
            w.writerow([r[0], r[1], r[2], repr(float(r[3]))])
        return buf.getvalue()


def end_region_partition(L: int, s: int) -> SitePartition:
    """A = sites [0, L), B = the next ``s`` sites, C = the ``L`` sites after that."""
    return SitePartition(tuple(range(L)), tuple(range(L, L + s)), tuple(range(L + s, 2 * L + s)), float(s + 1))


def trial_seed(seed: int, trial: int) -> int:
    return int(stream(seed, "brickwork-trial", trial).integers(2**62))


def region_cmi_scan(n: int, D: int, d: int = 2, L: int = 2, separations: Sequence[int] = (2, 4, 6),
                    trials: int = 100, seed: int = 0) -> RegionScan:
    """Exact CMI between two end regions of width ``L`` separated by ``s`` measured sites.

    Sites beyond C are marginalized. Each trial draws a fresh circuit with a
    seed derived from ``(seed, trial)``.
    """
    seps = tuple(int(s) for s in separations)
    if any(2 * L + s > n for s in seps):
        raise ValueError("regions do not fit in the chain")
    rows = []
    for t in range(trials):
        ts = trial_seed(seed, t)
        dist = measurement_distribution(run(random_brickwork(n, D, d, ts)))
        rows += [(t, ts, s, cmi(dist, end_region_partition(L, s)).cmi) for s in seps]
    median = {s: float(np.median([r[3] for r in rows if r[2] == s])) for s in seps}
    mean = {s: float(np.mean([r[3] for r in rows if r[2] == s])) for s in seps}
    fit = fit_cmi_length([(s, median[s]) for s in seps]) if len(seps) >= 3 else None
    manifest = {"n": n, "D": D, "d": d, "L": L, "trials": trials, "separations": list(seps), "seed": seed}
    return RegionScan(seps, rows, median, mean, fit, manifest)
