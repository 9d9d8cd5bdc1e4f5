"""Restricted-Boltzmann-machine wavefunctions trained by variational Monte Carlo.

Visible spins are bits ``x_i in {0, 1}`` with site 0 most significant, and
hidden units are summed out analytically:

    log psi(x) = a.x + sum_j log(1 + exp(b_j + sum_i x_i W_ij)).

Gradients are returned as complex arrays whose real (imaginary) part is the
derivative of the energy with respect to the real (imaginary) part of each
parameter.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .hamiltonians import HamiltonianSpec, ground_state
from .rng import stream

log = logging.getLogger(__name__)

PARAM_GUARD = 50.0
MAX_EXACT_SITES = 12
LogAmplitude = Callable[[np.ndarray], np.ndarray]


class OverflowGuard(ValueError):
    """Raised when RBM parameters leave the range where exponentials are safe."""


@dataclass(frozen=True)
class RbmParams:
    a: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)
    W: np.ndarray = field(repr=False)

    def __post_init__(self):
        a, b, W = (np.asarray(v, dtype=complex) for v in (self.a, self.b, self.W))
        if W.shape != (a.size, b.size):
            raise ValueError(f"W has shape {W.shape}, expected {(a.size, b.size)}")
        for v in (a, b, W):
            if not np.all(np.isfinite(v)):
                raise OverflowGuard("non-finite RBM parameter")
            if v.size and np.abs(v).max() > PARAM_GUARD:
                raise OverflowGuard(f"RBM parameter magnitude above {PARAM_GUARD}")
        object.__setattr__(self, "a", a.ravel())
        object.__setattr__(self, "b", b.ravel())
        object.__setattr__(self, "W", W)

    @property
    def n(self) -> int:
        return self.a.size

    @property
    def n_hidden(self) -> int:
        return self.b.size

    def flat(self) -> np.ndarray:
        return np.concatenate([self.a, self.b, self.W.ravel()])

    @classmethod
    def from_flat(cls, n: int, n_hidden: int, v: np.ndarray) -> "RbmParams":
        v = np.asarray(v)
        return cls(v[:n], v[n:n + n_hidden], v[n + n_hidden:].reshape(n, n_hidden))

    @classmethod
    def random(cls, n: int, n_hidden: int, rng: np.random.Generator, scale: float = 0.01,
               real: bool = False) -> "RbmParams":
        size = n + n_hidden + n * n_hidden
        v = scale * rng.standard_normal(size)
        if not real:
            v = v + 1j * scale * rng.standard_normal(size)
        return cls.from_flat(n, n_hidden, v)


def _log1pexp(z: np.ndarray) -> np.ndarray:
    """Stable complex ``log(1 + e^z)``."""
    z = np.asarray(z, dtype=complex)
    big = z.real > 0
    return np.log(1 + np.exp(np.where(big, -z, z))) + np.where(big, z, 0)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return np.exp(-_log1pexp(-z))


def rbm_log_amplitude(params: RbmParams, x: np.ndarray) -> np.ndarray:
    """``log psi`` for one configuration (shape ``(n,)``) or a batch ``(B, n)``."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.n:
        raise ValueError(f"configuration length {x.shape[-1]} != {params.n}")
    return x @ params.a + _log1pexp(x @ params.W + params.b).sum(axis=-1)


def rbm_amplitude(params: RbmParams, x: np.ndarray) -> np.ndarray:
    return np.exp(rbm_log_amplitude(params, x))


def log_derivatives(params: RbmParams, x: np.ndarray) -> np.ndarray:
    """``O_k = d log psi / d w_k`` in the ``flat()`` ordering; shape ``(B, n_params)``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    sig = _sigmoid(x @ params.W + params.b)
    return np.concatenate([x.astype(complex), sig, (x[:, :, None] * sig[:, None, :]).reshape(len(x), -1)], axis=1)


def all_configs(n: int) -> np.ndarray:
    """Every bitstring, row ``k`` the binary digits of ``k`` (site 0 most significant)."""
    if n > MAX_EXACT_SITES + 4:
        raise ValueError("enumeration limited to 16 sites")
    k = np.arange(2**n)
    return ((k[:, None] >> np.arange(n - 1, -1, -1)) & 1).astype(np.int8)


def config_index(x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.int64))
    return x @ (1 << np.arange(x.shape[1] - 1, -1, -1))


def vector_log_amplitude(vec: np.ndarray) -> LogAmplitude:
    """Lookup-table log amplitude for an explicit state vector (``-inf`` where it vanishes)."""
    vec = np.asarray(vec, dtype=complex)
    with np.errstate(divide="ignore"):
        logs = np.log(vec)

    def fn(x):
        return logs[config_index(x)].reshape(np.shape(x)[:-1])

    return fn


def local_energy(H: HamiltonianSpec, log_psi: LogAmplitude, x: np.ndarray) -> np.ndarray:
    """``E_loc(x) = sum_x' <x|H|x'> psi(x') / psi(x)`` for a batch of configurations."""
    x = np.atleast_2d(np.asarray(x, dtype=np.int8))
    lp = np.asarray(log_psi(x))
    if np.any(np.isneginf(lp.real)):
        raise ZeroDivisionError("local energy requested where psi(x) = 0")
    nb, el = H.connected(x)
    lp_nb = np.asarray(log_psi(nb.reshape(-1, H.n))).reshape(nb.shape[:2])
    return np.sum(el * np.exp(lp_nb - lp[:, None]), axis=1)


@dataclass(frozen=True)
class SamplerConfig:
    chains: int = 64
    burn_in: int = 20  # sweeps
    sweeps: int = 1  # sweeps between recorded samples

    def __post_init__(self):
        if self.chains < 1 or self.sweeps < 1 or self.burn_in < 0:
            raise ValueError("sampler needs chains >= 1, sweeps >= 1, burn_in >= 0")


@dataclass(frozen=True)
class SampleBatch:
    configs: np.ndarray
    acceptance: float


def metropolis_sample(log_psi: LogAmplitude, n: int, count: int, config: SamplerConfig,
                      rng: np.random.Generator, start: np.ndarray | None = None) -> SampleBatch:
    """Single-spin-flip Metropolis chains targeting ``|psi|^2``.

    A sweep is ``n`` proposals per chain, each flipping a uniformly chosen
    site and accepted with probability ``min(1, |psi(x')/psi(x)|^2)``.
    """
    if count < 1:
        raise ValueError("count must be positive")
    c = config.chains
    x = rng.integers(0, 2, (c, n), dtype=np.int8) if start is None else np.array(start, dtype=np.int8)
    lp = np.asarray(log_psi(x))
    rows = np.arange(c)
    per_chain = -(-count // c)
    accepted = proposed = 0
    out = []
    for sweep in range(config.burn_in + per_chain * config.sweeps):
        for _ in range(n):
            site = rng.integers(0, n, c)
            y = x.copy()
            y[rows, site] ^= 1
            lq = np.asarray(log_psi(y))
            ratio = np.exp(np.minimum(2 * (lq.real - lp.real), 0.0))
            ok = rng.random(c) < ratio
            x[ok], lp[ok] = y[ok], lq[ok]
            if sweep >= config.burn_in:
                accepted += int(ok.sum())
                proposed += c
        if sweep >= config.burn_in and (sweep - config.burn_in + 1) % config.sweeps == 0:
            out.append(x.copy())
    configs = np.stack(out, axis=1).reshape(-1, n)[:count]
    return SampleBatch(configs, accepted / proposed if proposed else 1.0)


def metropolis_kernel(log_psi: LogAmplitude, n: int) -> np.ndarray:
    """Column-stochastic single-proposal transition matrix on all ``2^n`` configurations."""
    xs = all_configs(n)
    lp = np.asarray(log_psi(xs))
    dim = 2**n
    T = np.zeros((dim, dim))
    for i in range(n):
        j = np.arange(dim) ^ (1 << (n - 1 - i))
        ratio = np.exp(np.minimum(2 * (lp[j].real - lp.real), 0.0))
        T[j, np.arange(dim)] += ratio / n
    T[np.arange(dim), np.arange(dim)] += 1 - T.sum(axis=0)
    return T


@dataclass(frozen=True)
class GradientResult:
    energy: float
    variance: float
    gradient: np.ndarray  # flat, complex-encoded
    step: np.ndarray  # direction to subtract (SR-preconditioned when requested)
    imag_residual: float


def gradient(params: RbmParams, samples: np.ndarray, H: HamiltonianSpec, *, weights: np.ndarray | None = None,
             sr_shift: float | None = None, phase: np.ndarray | None = None,
             eloc: np.ndarray | None = None) -> GradientResult:
    """Energy gradient ``2 (<E_loc O*> - <E_loc><O*>)`` from samples (uniform weights) or exact weights.

    With ``phase`` the ansatz is ``|RBM(x)| e^{i g(x)}`` and the log-derivatives
    with respect to the real and imaginary parts of each parameter are
    ``Re O`` and ``-Im O``. With ``sr_shift`` the step solves
    ``(S + shift) dw = F`` with ``S`` the covariance of the log-derivatives.
    """
    samples = np.atleast_2d(samples)
    if len(samples) == 0:
        raise ValueError("empty batch")
    w = np.full(len(samples), 1 / len(samples)) if weights is None else np.asarray(weights, dtype=float)
    if eloc is None:
        eloc = local_energy(H, _ansatz(params, phase), samples)
    O = log_derivatives(params, samples)
    if phase is not None:
        O = np.concatenate([O.real, -O.imag], axis=1)
    e = complex(w @ eloc)
    var = float(w @ np.abs(eloc - e) ** 2)
    Oc = O - w @ O
    F = (w[:, None] * Oc.conj()).T @ (eloc - e)
    if phase is not None:
        F = F.real
    step = F
    if sr_shift is not None:
        if sr_shift <= 0:
            raise ValueError("SR shift must be positive")
        S = (w[:, None] * Oc.conj()).T @ Oc
        try:
            step = np.linalg.solve(S + sr_shift * np.eye(len(S)), F)
        except np.linalg.LinAlgError:
            log.warning("SR matrix singular; retrying with shift %.1e", 10 * sr_shift)
            step = np.linalg.solve(S + 10 * sr_shift * np.eye(len(S)), F)
    grad, step = 2 * F, (step if sr_shift is not None else 2 * F)
    if phase is not None:
        m = len(F) // 2
        grad, step = grad[:m] + 1j * grad[m:], step[:m] + 1j * step[m:]
    return GradientResult(e.real, var, grad, step, abs(e.imag))


def _ansatz(params: RbmParams, phase: np.ndarray | None) -> LogAmplitude:
    if phase is None:
        return lambda x: rbm_log_amplitude(params, x)
    return lambda x: rbm_log_amplitude(params, x).real + 1j * phase[config_index(x)].reshape(np.shape(x)[:-1])


def exact_state(params: RbmParams, phase: np.ndarray | None = None) -> np.ndarray:
    """Normalized ansatz vector by enumeration."""
    lp = _ansatz(params, phase)(all_configs(params.n))
    v = np.exp(lp - lp.real.max())
    return v / np.linalg.norm(v)


def exact_energy(params: RbmParams, H: HamiltonianSpec, phase: np.ndarray | None = None) -> float:
    """Rayleigh quotient by full enumeration."""
    v = exact_state(params, phase)
    return float(np.vdot(v, H.matvec(v)).real)


@dataclass(frozen=True)
class VmcConfig:
    steps: int = 300
    batch: int = 1024
    lr: float = 0.05
    lr_decay: float = 1.0  # multiply lr by this every ``decay_every`` steps
    decay_every: int = 100
    sampler: SamplerConfig = SamplerConfig()
    seed: int = 0
    mode: str = "free-phase"  # or "phase-informed"
    optimizer: str = "sgd"  # or "sr"
    shift: float = 1e-2
    n_hidden: int | None = None  # default 2n
    init_scale: float = 0.01
    estimator: str = "sample"  # or "exact" (full enumeration, n <= 12)
    abort_above: float | None = 0.0  # divergence ceiling

    def __post_init__(self):
        if self.steps < 1 or self.batch < 1 or self.decay_every < 1:
            raise ValueError("steps, batch and decay_every must be positive")
        if self.lr <= 0 or not 0 < self.lr_decay <= 1:
            raise ValueError("need lr > 0 and 0 < lr_decay <= 1")
        if self.mode not in ("free-phase", "phase-informed"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.optimizer not in ("sgd", "sr"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.optimizer == "sr" and self.shift <= 0:
            raise ValueError("SR needs a positive diagonal shift")
        if self.estimator not in ("sample", "exact"):
            raise ValueError(f"unknown estimator {self.estimator!r}")

    def learning_rate(self, step: int) -> float:
        return self.lr * self.lr_decay ** (step // self.decay_every)


@dataclass
class TrainingTrace:
    steps: list[tuple[int, float, float, float]]  # step, energy_mean, energy_var, acceptance
    params: RbmParams
    final_energy: float  # Rayleigh quotient when enumerable, else last estimate
    reference_energy: float | None
    aborted: bool = False
    message: str = ""

    @property
    def relative_error(self) -> float | None:
        if self.reference_energy is None:
            return None
        return abs(self.final_energy - self.reference_energy) / abs(self.reference_energy)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "energy_mean", "energy_var", "acceptance"])
        for s, e, v, a in self.steps:
            w.writerow([s, repr(float(e)), repr(float(v)), repr(float(a))])
        return buf.getvalue()


def exact_phases(H: HamiltonianSpec) -> np.ndarray:
    """Phase ``g(x)`` of the exact ground state (zero where the amplitude vanishes)."""
    if H.n > MAX_EXACT_SITES:
        raise ValueError("phase-informed mode needs n <= 12")
    amps = ground_state(H).state.amplitudes
    return np.where(np.abs(amps) > 1e-12, np.angle(amps), 0.0)


def train(H: HamiltonianSpec, config: VmcConfig, reference_energy: float | None = None,
          phases: np.ndarray | None = None) -> TrainingTrace:
    """Minimize the variational energy; the ansatz is the complex RBM or ``|RBM| e^{i g}`` with fixed ``g``."""
    n = H.n
    rng = stream(config.seed, "vmc")
    informed = config.mode == "phase-informed"
    if informed and phases is None:
        phases = exact_phases(H)
    phase = phases if informed else None
    params = RbmParams.random(n, config.n_hidden or 2 * n, rng, config.init_scale)
    exact = config.estimator == "exact"
    if exact:
        if n > MAX_EXACT_SITES:
            raise ValueError("exact estimator needs n <= 12")
        xs = all_configs(n)
        mat = H.sparse()
    start = None
    trace, aborted, message = [], False, ""
    shift = config.shift if config.optimizer == "sr" else None
    for step in range(config.steps):
        if exact:
            v = exact_state(params, phase)
            weights = np.abs(v) ** 2
            keep = weights > 1e-300
            hv = mat @ v
            eloc = hv[keep] / v[keep]
            res = gradient(params, xs[keep], H, weights=weights[keep] / weights[keep].sum(), sr_shift=shift,
                           phase=phase, eloc=eloc)
            acc = 1.0
        else:
            batch = metropolis_sample(_ansatz(params, phase), n, config.batch, config.sampler, rng, start)
            start = batch.configs[-config.sampler.chains:]
            res = gradient(params, batch.configs, H, sr_shift=shift, phase=phase)
            acc = batch.acceptance
        trace.append((step, res.energy, res.variance, acc))
        # a near-uniform start may sit slightly above the ceiling; abort only on upward drift beyond noise
        noise = 0.0 if exact else 3 * np.sqrt(res.variance / config.batch)
        if config.abort_above is not None and step and res.energy > max(config.abort_above, trace[0][1]) + noise:
            aborted, message = True, f"energy {res.energy:.4g} above {config.abort_above} at step {step}"
            log.warning("training aborted: %s", message)
            break
        try:
            params = RbmParams.from_flat(n, params.n_hidden, params.flat() - config.learning_rate(step) * res.step)
        except OverflowGuard as err:
            aborted, message = True, f"step {step}: {err}"
            log.warning("training aborted: %s", message)
            break
    final = exact_energy(params, H, phase) if n <= MAX_EXACT_SITES else trace[-1][1]
    return TrainingTrace(trace, params, final, reference_energy, aborted, message)


@dataclass(frozen=True)
class EnergyEstimate:
    estimate: float
    samples: int
    pilot_variance: float
    imag_residual: float


def energy_estimate(log_psi: LogAmplitude, H: HamiltonianSpec, epsilon: float, delta: float,
                    rng: np.random.Generator, sampler: SamplerConfig = SamplerConfig(),
                    pilot: int = 1024, max_samples: int = 10**7) -> EnergyEstimate:
    """Mean local energy with a Chebyshev sample budget ``T = Var / (epsilon^2 delta)``.

    The variance comes from a pilot batch; with zero variance a single
    sample suffices.
    """
    if epsilon <= 0 or not 0 < delta < 1:
        raise ValueError("need epsilon > 0 and 0 < delta < 1")
    first = metropolis_sample(log_psi, H.n, pilot, sampler, rng)
    e = local_energy(H, log_psi, first.configs)
    var = float(np.var(e))
    budget = int(min(max(np.ceil(var / (epsilon**2 * delta)), 1), max_samples))
    start = first.configs[-sampler.chains:]
    batch = metropolis_sample(log_psi, H.n, budget, replace(sampler, burn_in=0), rng, start)
    eloc = local_energy(H, log_psi, batch.configs)
    mean = complex(eloc.mean())
    return EnergyEstimate(mean.real, budget, var, abs(mean.imag))


def trace_rows(traces: Sequence[TrainingTrace]) -> list[float | None]:
    return [t.relative_error for t in traces]
