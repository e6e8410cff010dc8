import json
import sys
from pathlib import Path

import numpy as np
import pytest

from critshe import cli


def run(argv):
    return cli.main(argv)


def test_kernels_row_count_and_determinism(tmp_path):
    out = tmp_path / "k"
    assert run(["kernels", "--beta", "1", "--tau-grid", "log:1e-3:10:50",
                "--out", str(out)]) == 0
    csv_path = out / "sbeta.csv"
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "tau,x,value"
    assert len(lines) == 51
    first = csv_path.read_bytes()
    assert run(["kernels", "--beta", "1", "--tau-grid", "log:1e-3:10:50",
                "--out", str(out)]) == 0
    assert csv_path.read_bytes() == first
    assert (out / "manifest_kernels.json").exists()
    man = json.loads((out / "manifest_kernels.json").read_text())
    assert man["artifact_version"] and "sbeta.csv" in man["outputs"]


def test_kernels_bad_beta_usage_error(tmp_path):
    assert run(["kernels", "--beta", "-1", "--out", str(tmp_path)]) == 1


def test_bad_subcommand_usage_error(capsys):
    with pytest.raises(SystemExit) as e:
        run(["frobnicate"])
    assert e.value.code == 1


def test_duality_csv(tmp_path):
    out = tmp_path / "d"
    assert run(["duality", "--n", "2", "--eps", "0.1", "--t", "0.0625",
                "--paths", "1000", "--seed", "3", "--out", str(out)]) == 0
    lines = (out / "duality.csv").read_text().splitlines()
    assert lines[0] == "estimate,stderr,n,config"
    assert len(lines) == 2


def test_duality_gate_violation(tmp_path):
    rc = run(["duality", "--n", "2", "--eps", "0.1", "--t", "0.0625",
              "--paths", "1000", "--delta", "0.01", "--out", str(tmp_path)])
    assert rc == 2


def test_simulate_outputs_and_gate(tmp_path):
    conf = {"box_size": 4.0, "grid_n": 256, "dt": 5e-4, "T": 0.005,
            "eps": 0.1, "n_replicas": 2, "seed": 7, "record_times": [0.005]}
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(conf))
    out = tmp_path / "s"
    assert run(["simulate", "--config", str(cfg_path), "--out", str(out)]) == 0
    est = (out / "estimators.csv").read_text().splitlines()
    assert est[0] == "name,mean,stderr,n"
    snap = (out / "snapshot_t0.005.csv").read_text().splitlines()
    assert snap[0] == "x_index,y_index,value"
    assert len(snap) == 256 * 256 + 1

    conf["grid_n"] = 64  # dx gate violation
    cfg_path.write_text(json.dumps(conf))
    assert run(["simulate", "--config", str(cfg_path), "--out", str(out)]) == 2


def test_simulate_binary_sidecar(tmp_path):
    conf = {"box_size": 4.0, "grid_n": 256, "dt": 5e-4, "T": 0.005,
            "eps": 0.1, "n_replicas": 1, "seed": 7, "output": "binary",
            "record_times": [0.005]}
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(conf))
    out = tmp_path / "b"
    assert run(["simulate", "--config", str(cfg_path), "--out", str(out)]) == 0
    arr = np.load(out / "snapshot_t0.005.npy")
    assert arr.shape == (256, 256)
    side = json.loads((out / "snapshot_t0.005.json").read_text())
    assert side["grid_n"] == 256 and side["eps"] == 0.1 and side["seed"] == 7


def test_simulate_toml_config(tmp_path):
    cfg_path = tmp_path / "cfg.toml"
    cfg_path.write_text(
        'box_size = 4.0\ngrid_n = 256\ndt = 5e-4\nT = 0.005\neps = 0.1\n'
        'n_replicas = 1\nseed = 7\nrecord_times = [0.005]\n')
    assert run(["simulate", "--config", str(cfg_path),
                "--out", str(tmp_path / "t")]) == 0


def test_verify_suite_and_report(tmp_path):
    out = tmp_path / "v"
    rc = run(["verify", "--suite", "operators", "--out", str(out)])
    assert rc in (0, 3)
    lines = (out / "verify_operators.csv").read_text().splitlines()
    assert lines[0].startswith("criterion,status,residual,tolerance")
    assert len(lines) == 4  # A5, A6, A12
    assert rc == 0  # the operators identities must pass
    assert run(["report", "--dir", str(out)]) == 0
    assert (out / "report_summary.csv").exists()
