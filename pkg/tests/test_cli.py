from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import subprocess
import sys

import pytest

from cmilab import cli
from cmilab.cli import EXPERIMENTS, ExperimentConfig, Outcome, SchemaError, main, run, validate


def write_config(tmp_path, doc, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def read_csv(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


def test_validate_defaults_and_errors():
    schema = {"n": ("int", cli.REQUIRED), "xs": ("floats", [0.5])}
    assert validate({"n": 4}, schema) == {"n": 4, "xs": [0.5]}
    with pytest.raises(SchemaError):
        validate({}, schema)
    with pytest.raises(SchemaError):
        validate({"n": 4, "bogus": 1}, schema)
    with pytest.raises(SchemaError):
        validate({"n": "four"}, schema)


def test_cluster_rotate_end_to_end(tmp_path):
    thetas = [0.0, math.pi / 8, math.pi / 4, 3 * math.pi / 8, math.pi / 2]
    cfg = write_config(tmp_path, {"params": {"n": 8, "thetas": thetas}, "seed": 5})
    out = tmp_path / "run"
    assert main(["cluster-rotate", "--config", cfg, "--out", str(out)]) == 0
    rows = read_csv(out / "cluster_rotate.csv")
    assert len(rows) == 5
    for r in rows:
        assert float(r["cmi_bits"]) <= float(r["bound"]) + 1e-9
        assert r["seed"] == "5"
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest) >= {"config", "version", "wall_time_s", "outputs", "threads"}
    digest = hashlib.sha256((out / "cluster_rotate.csv").read_bytes()).hexdigest()
    assert manifest["outputs"]["cluster_rotate.csv"] == digest


def test_missing_parameter_exits_3_without_outputs(tmp_path):
    cfg = write_config(tmp_path, {"params": {"thetas": [0.1]}})
    out = tmp_path / "nothing"
    assert main(["cluster-rotate", "--config", cfg, "--out", str(out)]) == 3
    assert not out.exists()


def test_bare_params_document(tmp_path):
    cfg = write_config(tmp_path, {"n": 4, "n_theta": 3})
    assert main(["cluster-rotate", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    assert len(read_csv(tmp_path / "o" / "cluster_rotate.csv")) == 3


def test_unknown_experiment_exit_2(tmp_path):
    with pytest.raises(SystemExit) as err:
        main(["no-such-thing"])
    assert err.value.code == 2
    cfg = write_config(tmp_path, {"experiment": "no-such-thing", "params": {}})
    assert main(["cluster-rotate", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_budget_exit_4(tmp_path):
    cfg = write_config(tmp_path, {"family": "PEPS", "r": 2, "mu": 0.0, "shape": [5, 5], "seeds": 1})
    assert main(["tn-cmi", "--config", cfg, "--out", str(tmp_path / "o")]) == 4


def test_bound_violation_exit_1(tmp_path, monkeypatch):
    fake = lambda p, seed: Outcome({"x.csv": "a\n1\n"}, ["value 2 above bound 1"])
    monkeypatch.setitem(EXPERIMENTS, "cluster-rotate", (fake, {}))
    res = run(ExperimentConfig("cluster-rotate", {}, out=str(tmp_path / "o")))
    assert res.status == 1 and res.manifest is None
    assert (tmp_path / "o" / "x.csv").exists() and not (tmp_path / "o" / "manifest.json").exists()


def test_determinism_across_runs_and_threads(tmp_path):
    cfg = write_config(tmp_path, {"params": {"n": 10, "D": 2, "trials": 4, "separations": [2, 4]}, "seed": 9})
    main(["brickwork-cmi", "--config", cfg, "--out", str(tmp_path / "a"), "--threads", "1"])
    main(["brickwork-cmi", "--config", cfg, "--out", str(tmp_path / "b"), "--threads", "4"])
    a = (tmp_path / "a" / "brickwork_cmi.csv").read_bytes()
    assert a == (tmp_path / "b" / "brickwork_cmi.csv").read_bytes()
    assert a.decode().splitlines()[0] == "trial,seed,separation,cmi_bits"


def test_seed_flag_overrides_config(tmp_path):
    cfg = write_config(tmp_path, {"params": {"n": 10, "D": 2, "trials": 2, "separations": [2]}, "seed": 1})
    main(["brickwork-cmi", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["brickwork-cmi", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "2"])
    assert (tmp_path / "a" / "brickwork_cmi.csv").read_bytes() != (tmp_path / "b" / "brickwork_cmi.csv").read_bytes()


def test_log_base_other_than_two_rejected(tmp_path):
    cfg = write_config(tmp_path, {"params": {"n": 4}, "log_base": 10})
    assert main(["cluster-rotate", "--config", cfg, "--out", str(tmp_path / "o")]) == 3


@pytest.mark.parametrize("experiment,params,files", [
    ("entswap-chain", {"ns": [2, 3], "a0_sq": [0.7], "bases": 2}, ["entswap_chain.csv"]),
    ("haar-f", {"samples": 2000}, ["haar_f.csv"]),
    ("haar-f", {"samples": 200, "circuit": "shallow"}, ["haar_f.csv"]),
    ("tn-cmi", {"family": "MPS", "r": 2, "mu": 1.0, "seeds": 2, "n": 8}, ["tn_cmi.csv"]),
    ("hamiltonian-cmi", {"models": [{"model": "tfim", "params": {"n": 8, "J": -1.0, "h": 2.0}}], "dists": [1, 2, 3]},
     ["hamiltonian_cmi.csv"]),
    ("markov-factorize", {"model": "tfim", "params": {"n": 8, "J": -1.0, "h": 2.0}, "width": 2},
     ["markov_factorize.json"]),
    ("area-law", {"model": "tfim", "params": {"n": 8, "J": -1.0, "h": 1.0}, "sizes": [3, 2, 3]}, ["area_law.csv"]),
    ("vmc-train", {"model": "tfim", "params": {"n": 4, "J": -1.0, "h": 1.0}, "steps": 5, "batch": 64, "chains": 8},
     ["vmc_trace.csv", "vmc_summary.csv"]),
])
def test_every_experiment_runs(tmp_path, experiment, params, files):
    cfg = write_config(tmp_path, {"params": params, "seed": 0})
    out = tmp_path / "o"
    assert main([experiment, "--config", cfg, "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert sorted(manifest["outputs"]) == sorted(files)


def test_markov_json_fields(tmp_path):
    cfg = write_config(tmp_path, {"model": "tfim", "params": {"n": 8, "J": -1.0, "h": 2.0}, "width": 2})
    main(["markov-factorize", "--config", cfg, "--out", str(tmp_path / "o")])
    doc = json.loads((tmp_path / "o" / "markov_factorize.json").read_text())
    assert {"regions", "separators", "tv_error", "certificate"} <= set(doc)
    assert doc["tv_error"] <= doc["certificate"] + 1e-9


def test_area_law_needs_sign_free_state(tmp_path):
    cfg = write_config(tmp_path, {"model": "tfim", "params": {"n": 6, "J": 1.0, "h": 1.0}, "sizes": [2, 2, 2]})
    assert main(["area-law", "--config", cfg, "--out", str(tmp_path / "o")]) == 3


def test_bad_model_parameters_are_schema_errors(tmp_path):
    cfg = write_config(tmp_path, {"model": "tfim", "params": {"n": 6, "spin": 3}, "width": 2})
    assert main(["markov-factorize", "--config", cfg, "--out", str(tmp_path / "o")]) == 3


def test_module_entry_point(tmp_path):
    cfg = write_config(tmp_path, {"n": 4, "n_theta": 2})
    proc = subprocess.run([sys.executable, "-m", "cmilab", "cluster-rotate", "--config", cfg, "--out",
                           str(tmp_path / "o")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "o" / "manifest.json").exists()
