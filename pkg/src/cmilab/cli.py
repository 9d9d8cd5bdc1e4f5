"""Command-line experiment runner.

Each subcommand reads a JSON config, runs one experiment, writes CSV/JSON
outputs and finally ``manifest.json`` with sha256 checksums.

Exit codes: 0 success, 1 a certified inequality failed, 2 unknown
experiment, 3 config schema violation (nothing written), 4 budget exceeded.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .circuits import region_cmi_scan
from .distributions import SitePartition, measurement_distribution
from .entswap import (
    SchmidtPair, chain_swap, cluster_csv, haar_f_expectation, haar_f_samples, rotated_cluster_experiment,
    shallow_f_floor, shallow_f_samples,
)
from .hamiltonians import build, cmi_decay_scan, ground_state
from .markov import area_law_check, markov_conditionals
from .rng import stream
from .state import BudgetError, haar_unitary
from .tensornet import tn_cmi_experiment
from .vmc import SamplerConfig, VmcConfig, train

log = logging.getLogger("cmilab")

EXIT_OK, EXIT_BOUND, EXIT_UNKNOWN, EXIT_SCHEMA, EXIT_BUDGET = 0, 1, 2, 3, 4
BOUND_TOL = 1e-9
REQUIRED = object()


class SchemaError(ValueError):
    pass


class UnknownExperiment(KeyError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str
    params: dict[str, Any]
    seed: int = 0
    out: str = "."
    log_base: int = 2


@dataclass
class Outcome:
    files: dict[str, str]
    violations: list[str] = field(default_factory=list)
    summary: dict[str, Any] = field(default_factory=dict)


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


_CHECKS: dict[str, Callable[[Any], bool]] = {
    "int": lambda v: isinstance(v, int) and not isinstance(v, bool),
    "float": _is_number,
    "str": lambda v: isinstance(v, str),
    "bool": lambda v: isinstance(v, bool),
    "dict": lambda v: isinstance(v, dict),
    "ints": lambda v: isinstance(v, list) and all(_CHECKS["int"](x) for x in v),
    "floats": lambda v: isinstance(v, list) and all(_is_number(x) for x in v),
    "list": lambda v: isinstance(v, list),
}


def validate(params: dict, schema: dict[str, tuple[str, Any]]) -> dict:
    """Type-check ``params`` against ``{name: (kind, default)}``; fill defaults."""
    if not isinstance(params, dict):
        raise SchemaError("params must be a JSON object")
    unknown = sorted(set(params) - set(schema))
    if unknown:
        raise SchemaError(f"unknown parameters: {', '.join(unknown)}")
    out = {}
    for name, (kind, default) in schema.items():
        if name not in params:
            if default is REQUIRED:
                raise SchemaError(f"missing required parameter {name!r}")
            out[name] = default
            continue
        if not _CHECKS[kind](params[name]):
            raise SchemaError(f"parameter {name!r} must be of kind {kind}")
        out[name] = params[name]
    return out


def _csv(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def _sub_seed(seed: int, *keys) -> int:
    return int(stream(seed, *keys).integers(2**62))


def _cluster_rotate(p: dict, seed: int) -> Outcome:
    thetas = p["thetas"] if p["thetas"] is not None else list(np.linspace(0, np.pi / 2, p["n_theta"]))
    rows = [rotated_cluster_experiment(p["n"], float(t)) for t in thetas]
    bad = [f"theta={r.theta:.6g}: CMI {r.cmi.cmi:.3e} above bound {min(r.bound, r.avg_entropy):.3e}"
           for r in rows if not r.ok]
    return Outcome({"cluster_rotate.csv": cluster_csv(rows, seed)}, bad)


def _entswap_chain(p: dict, seed: int) -> Outcome:
    rows, bad = [], []
    for n in p["ns"]:
        for w in p["a0_sq"]:
            a = SchmidtPair.from_weight(w)
            for t in range(p["bases"]):
                rng = stream(seed, "entswap-chain", n, repr(w), t)
                bases = [haar_unitary(4, rng) for _ in range(n - 1)]
                res = chain_swap(n, a, bases, mode=p["mode"], samples=p["samples"], rng=rng)
                slack = 3 * res.stderr
                if res.avg_entropy > res.bound + slack + 1e-10:
                    bad.append(f"n={n} a0^2={w} trial={t}: {res.avg_entropy:.3e} > {res.bound:.3e}")
                rows.append((n, float(w), t, res.avg_entropy, res.bound, res.stderr))
    header = ["n", "a0_sq", "trial", "avg_entropy_bits", "bound", "stderr"]
    return Outcome({"entswap_chain.csv": _csv(header, rows)}, bad)


def _haar_f(p: dict, seed: int) -> Outcome:
    if p["sigma"] not in ("mixed", "pure"):
        raise SchemaError("sigma must be 'mixed' or 'pure'")
    rng = stream(seed, "haar-f")
    if p["circuit"] == "haar":
        d0 = p["d0"]
        sigma = np.eye(2) / 2 if p["sigma"] == "mixed" else np.diag([1.0, 0.0])
        vals = haar_f_samples(d0, sigma, p["samples"], rng)
        expected, floor = haar_f_expectation(d0, sigma), 1 / (2 * d0**4)
    elif p["circuit"] == "shallow":
        D, d = p["D"], p["d"]
        d0 = d ** (D - 1)
        sigma = np.eye(d0) / d0 if p["sigma"] == "mixed" else np.diag([1.0] + [0.0] * (d0 - 1))
        vals = shallow_f_samples(D, d, sigma, p["samples"], rng)
        floor = shallow_f_floor(D, d) * float(np.trace(sigma @ sigma))
        expected = float("nan")
    else:
        raise SchemaError("circuit must be 'haar' or 'shallow'")
    mean, se = float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(len(vals)))
    bad = [f"mean f {mean:.5f} more than 3 standard errors below floor {floor:.5f}"] if mean + 3 * se < floor else []
    header = ["circuit", "d0", "sigma", "samples", "mean", "stderr", "expected", "floor"]
    return Outcome({"haar_f.csv": _csv(header, [(p["circuit"], d0, p["sigma"], len(vals), mean, se, expected, floor)])},
                   bad)


def _brickwork_cmi(p: dict, seed: int) -> Outcome:
    scan = region_cmi_scan(p["n"], p["D"], p["d"], p["L"], p["separations"], p["trials"], seed)
    bad = []
    if p["D"] == 1:
        worst = max(r[3] for r in scan.rows)
        if worst > 1e-10:
            bad.append(f"depth-1 circuit produced CMI {worst:.3e}")
    summary = {"median": {str(k): v for k, v in scan.median.items()}, "scan": scan.manifest}
    return Outcome({"brickwork_cmi.csv": scan.to_csv()}, bad, summary)


def _tn_cmi(p: dict, seed: int) -> Outcome:
    seeds = [_sub_seed(seed, "tn-cmi", k) for k in range(p["seeds"])]
    exp = tn_cmi_experiment(p["family"], p["r"], float(p["mu"]), seeds, n=p["n"], shape=tuple(p["shape"]),
                            dists=p["dists"])
    summary = {"median": {str(k): v for k, v in exp.medians.items()}, "geometry": exp.geometry,
               "xi": None if exp.fit is None else exp.fit.xi}
    return Outcome({"tn_cmi.csv": exp.to_csv()}, [], summary)


def _model(entry) -> tuple[str, Any]:
    if not isinstance(entry, dict) or not isinstance(entry.get("model"), str):
        raise SchemaError("each model entry needs a 'model' name")
    params = entry.get("params", {})
    if not isinstance(params, dict):
        raise SchemaError("model params must be an object")
    try:
        return entry["model"], build(entry["model"], **params)
    except TypeError as err:
        raise SchemaError(f"bad parameters for {entry['model']}: {err}") from err


def _hamiltonian_cmi(p: dict, seed: int) -> Outcome:
    specs = [_model(m) for m in p["models"]]
    dists = p["dists"] or list(range(1, min(s.n for _, s in specs) - 1))
    scan = cmi_decay_scan(specs, dists)
    summary = {"xi": {k: (None if f is None else f.xi) for k, f in scan.fits.items()}}
    return Outcome({"hamiltonian_cmi.csv": scan.to_csv()}, [], summary)


def _markov_factorize(p: dict, seed: int) -> Outcome:
    _, spec = _model({"model": p["model"], "params": p["params"]})
    dist = measurement_distribution(ground_state(spec).state)
    fac = markov_conditionals(dist, p["width"])
    bad = [] if fac.tv_error <= fac.certificate + BOUND_TOL else [
        f"TV error {fac.tv_error:.3e} exceeds certificate {fac.certificate:.3e}"]
    return Outcome({"markov_factorize.json": fac.to_json() + "\n"}, bad)


AREA_FIELDS = ["entropy_rho", "entropy_sigma", "boundary_cap", "entropy_b", "overlap", "overlap_floor", "cmi_nats",
               "trace_distance", "trace_distance_cap", "fannes_gap", "fannes_bound"]


def _area_law(p: dict, seed: int) -> Outcome:
    _, spec = _model({"model": p["model"], "params": p["params"]})
    sizes = p["sizes"]
    if len(sizes) != 3 or sum(sizes) != spec.n or min(sizes) < 1:
        raise SchemaError(f"sizes must be three positive block lengths summing to {spec.n}")
    a, b = sizes[0], sizes[0] + sizes[1]
    part = SitePartition(tuple(range(a)), tuple(range(a, b)), tuple(range(b, spec.n)))
    try:
        rep = area_law_check(ground_state(spec).state, part)
    except ValueError as err:
        raise SchemaError(f"model unsuitable for the area-law check: {err}") from err
    bad = [] if rep.ok else ["area-law inequality violated"]
    row = [getattr(rep, f) for f in AREA_FIELDS]
    return Outcome({"area_law.csv": _csv(AREA_FIELDS, [row])}, bad)


def _vmc_train(p: dict, seed: int) -> Outcome:
    _, spec = _model({"model": p["model"], "params": p["params"]})
    sampler = SamplerConfig(p["chains"], p["burn_in"], p["sweeps"])
    try:
        cfg = VmcConfig(steps=p["steps"], batch=p["batch"], lr=p["lr"], lr_decay=p["lr_decay"],
                        decay_every=p["decay_every"], sampler=sampler, seed=seed, mode=p["mode"],
                        optimizer=p["optimizer"], shift=p["shift"], n_hidden=p["n_hidden"],
                        init_scale=p["init_scale"], estimator=p["estimator"])
    except ValueError as err:
        raise SchemaError(str(err)) from err
    ref = p["reference_energy"]
    if ref is None and spec.n <= 12:
        ref = ground_state(spec).energy
    trace = train(spec, cfg, ref)
    bad = [f"training diverged: {trace.message}"] if trace.aborted else []
    summary = [(trace.final_energy, float("nan") if ref is None else float(ref),
                float("nan") if trace.relative_error is None else trace.relative_error, int(trace.aborted))]
    files = {"vmc_trace.csv": trace.to_csv(),
             "vmc_summary.csv": _csv(["final_energy", "reference_energy", "relative_error", "aborted"], summary)}
    return Outcome(files, bad)


_MODEL = {"model": ("str", REQUIRED), "params": ("dict", {})}

EXPERIMENTS: dict[str, tuple[Callable[[dict, int], Outcome], dict]] = {
    "cluster-rotate": (_cluster_rotate, {"n": ("int", REQUIRED), "thetas": ("floats", None), "n_theta": ("int", 7)}),
    "entswap-chain": (_entswap_chain, {"ns": ("ints", [2, 3, 4, 5]), "a0_sq": ("floats", [0.5, 0.7, 0.9]),
                                       "bases": ("int", 20), "mode": ("str", "enumerate"), "samples": ("int", 4096)}),
    "haar-f": (_haar_f, {"d0": ("int", 2), "samples": ("int", 100000), "sigma": ("str", "mixed"),
                         "circuit": ("str", "haar"), "D": ("int", 2), "d": ("int", 2)}),
    "brickwork-cmi": (_brickwork_cmi, {"n": ("int", REQUIRED), "D": ("int", REQUIRED), "d": ("int", 2),
                                       "L": ("int", 2), "separations": ("ints", [2, 4, 6]), "trials": ("int", 100)}),
    "tn-cmi": (_tn_cmi, {"family": ("str", REQUIRED), "r": ("int", REQUIRED), "mu": ("float", REQUIRED),
                         "seeds": ("int", 10), "n": ("int", 12), "shape": ("ints", [4, 4]), "dists": ("ints", None)}),
    "hamiltonian-cmi": (_hamiltonian_cmi, {"models": ("list", REQUIRED), "dists": ("ints", None)}),
    "markov-factorize": (_markov_factorize, {**_MODEL, "width": ("int", 3)}),
    "area-law": (_area_law, {**_MODEL, "sizes": ("ints", REQUIRED)}),
    "vmc-train": (_vmc_train, {**_MODEL, "steps": ("int", 300), "batch": ("int", 1024), "lr": ("float", 0.05),
                               "lr_decay": ("float", 1.0), "decay_every": ("int", 100), "chains": ("int", 64),
                               "burn_in": ("int", 20), "sweeps": ("int", 1), "mode": ("str", "free-phase"),
                               "optimizer": ("str", "sgd"), "shift": ("float", 1e-2), "n_hidden": ("int", None),
                               "init_scale": ("float", 0.01), "estimator": ("str", "sample"),
                               "reference_energy": ("float", None)}),
}


def _atomic_write(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


@dataclass
class RunResult:
    status: int
    outputs: dict[str, str]  # name -> sha256
    violations: list[str]
    manifest: dict | None


def run(config: ExperimentConfig, threads: int = 1) -> RunResult:
    """Validate, execute and write one experiment; raises ``SchemaError``/``BudgetError``/``UnknownExperiment``."""
    if config.experiment not in EXPERIMENTS:
        raise UnknownExperiment(config.experiment)
    if config.log_base != 2:
        raise SchemaError("outputs are reported in bits; log_base must be 2")
    if not isinstance(config.seed, int) or isinstance(config.seed, bool) or not 0 <= config.seed < 2**64:
        raise SchemaError("seed must be an unsigned 64-bit integer")
    fn, schema = EXPERIMENTS[config.experiment]
    params = validate(config.params, schema)
    start = time.perf_counter()
    try:
        outcome = fn(params, config.seed)
    except (SchemaError, BudgetError):
        raise
    except (TypeError, ValueError) as err:
        raise SchemaError(str(err)) from err
    wall = time.perf_counter() - start
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    sums = {}
    for name, text in outcome.files.items():
        data = text.encode()
        _atomic_write(out / name, data)
        sums[name] = hashlib.sha256(data).hexdigest()
    for v in outcome.violations:
        log.error("bound violated: %s", v)
    if outcome.violations:
        return RunResult(EXIT_BOUND, sums, outcome.violations, None)
    manifest = {"config": asdict(config) | {"params": params}, "version": __version__, "threads": threads,
                "wall_time_s": wall, "outputs": sums, "summary": outcome.summary}
    _atomic_write(out / "manifest.json", (json.dumps(manifest, indent=2, default=str) + "\n").encode())
    return RunResult(EXIT_OK, sums, [], manifest)


def _load_config(path: str | None, experiment: str) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as err:
        raise SchemaError(f"cannot read config {path}: {err}") from err
    if not isinstance(doc, dict):
        raise SchemaError("config must be a JSON object")
    if "experiment" in doc:
        if doc["experiment"] not in EXPERIMENTS:
            raise UnknownExperiment(doc["experiment"])
        if doc["experiment"] != experiment:
            raise SchemaError(f"config is for {doc['experiment']!r}, not {experiment!r}")
    return doc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cmilab", description="Conditional-mutual-information experiments.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="experiment")
    for name in EXPERIMENTS:
        sp = sub.add_parser(name, help=f"run the {name} experiment")
        sp.add_argument("--config", help="JSON document: {params: {...}, seed, log_base} or a bare params object")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        sp.add_argument("--threads", type=int, default=1, help="recorded in the manifest; results do not depend on it")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        doc = _load_config(args.config, args.experiment)
        wrapped = "params" in doc and set(doc) <= {"experiment", "params", "seed", "log_base"}
        params = doc.get("params", {}) if wrapped else doc
        seed = args.seed if args.seed is not None else doc.get("seed", 0)
        cfg = ExperimentConfig(args.experiment, params, seed, args.out, doc.get("log_base", 2))
        result = run(cfg, args.threads)
    except UnknownExperiment as err:
        log.error("unknown experiment %s", err)
        return EXIT_UNKNOWN
    except SchemaError as err:
        log.error("config error: %s", err)
        return EXIT_SCHEMA
    except BudgetError as err:
        log.error("budget exceeded: %s", err)
        return EXIT_BUDGET
    for name, digest in result.outputs.items():
        log.info("wrote %s (sha256 %s)", name, digest[:12])
    return result.status


if __name__ == "__main__":
    sys.exit(main())
