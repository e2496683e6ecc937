import csv
import json

import numpy as np
import pytest

from kinkflow.cli import CSV_COLUMNS, main

SMALL_INI = """\
[grid]
d = 2
n_transverse = 16
L_z = 30.0
n_z = 512

[init]
c0 = 0.3
eps = 0.05
shape = asymmetric

[run]
t_end = 0.5
dt = 0.01
dt_ramp = 0.01
record_stride = 8
"""


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "small.ini"
    path.write_text(SMALL_INI)
    return path


def read_rows(path):
    with path.open() as fh:
        return list(csv.reader(fh))


def test_missing_config(tmp_path, capsys):
    missing = tmp_path / "nope.ini"
    assert main(["run", "--config", str(missing), "--out", str(tmp_path / "o")]) == 1
    assert str(missing) in capsys.readouterr().err


def test_bad_override(config, tmp_path):
    assert main(["run", "--config", str(config), "--set", "init.eps=0.5",
                 "--out", str(tmp_path / "o")]) == 1
    assert main(["run", "--config", str(config), "--set", "bogus", "--out", str(tmp_path)]) == 1


def test_run_outputs_and_determinism(config, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", str(config), "--out", str(a)]) == 0
    rows = read_rows(a / "diagnostics.csv")
    assert rows[0] == CSV_COLUMNS and rows[0][:12] == [
        "t", "energy_gap", "dissipation", "hminus1_sq", "shift", "f_l2", "f_grad_l2", "f_sup",
        "gn_ratio", "mass", "alg_ratio_c", "alg_ratio_E"]
    t = np.array([float(r[0]) for r in rows[1:]])
    assert t[0] == 0.0 and t[-1] == 0.5 and np.all(np.diff(t) > 0)
    manifest = json.loads((a / "run-manifest.json").read_text())
    assert manifest["status"] == "completed" and len(manifest["config_hash"]) == 64
    # bit-identical rerun, and a rerun driven by the manifest alone
    assert main(["run", "--config", str(config), "--out", str(b)]) == 0
    assert (a / "diagnostics.csv").read_bytes() == (b / "diagnostics.csv").read_bytes()
    c = tmp_path / "c"
    assert main(["run", "--config", str(a / "run-manifest.json"), "--out", str(c)]) == 0
    assert (a / "diagnostics.csv").read_bytes() == (c / "diagnostics.csv").read_bytes()


def test_trivial_run_rows_vanish(config, tmp_path):
    out = tmp_path / "z"
    assert main(["run", "--config", str(config), "--set", "init.eps=0", "--set", "init.c0=0",
                 "--set", "init.shape=none", "--set", "run.t_end=0.05", "--out", str(out)]) == 0
    rows = read_rows(out / "diagnostics.csv")[1:]
    assert all(float(x) == 0.0 for r in rows for x in r[1:])


def test_abort_exit_code(config, tmp_path, monkeypatch):
    import kinkflow.cli as cli
    from kinkflow.evolution import SolverAbort

    def boom(*a, **kw):
        raise SolverAbort("sup norm 0.3 exceeds 0.2", 1.0, None)

    monkeypatch.setattr(cli, "run", boom)
    assert main(["run", "--config", str(config), "--out", str(tmp_path)]) == 2
    manifest = json.loads((tmp_path / "run-manifest.json").read_text())
    assert manifest["status"] == "aborted"


def write_synthetic(path, t, energy):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS[:12])
        for ti, e in zip(t, energy):
            row = dict.fromkeys(CSV_COLUMNS[:12], 0.0)
            row.update(t=ti, energy_gap=e, dissipation=e / max(ti, 1e-300) if ti else 1.0,
                       hminus1_sq=1.0, shift=ti**-0.25 if ti else 1.0,
                       f_l2=ti**-0.5 if ti else 1.0)
            w.writerow([row[c] for c in CSV_COLUMNS[:12]])


def test_analyze_synthetic(tmp_path):
    t = np.concatenate([[0.0], np.geomspace(1, 1000, 40)])
    e = np.where(t > 0, 1 / np.maximum(t, 1e-300), 1.0)
    path = tmp_path / "syn.csv"
    write_synthetic(path, t, e)
    out = tmp_path / "an"
    assert main(["analyze", str(path), "--window", "10:1000", "--out", str(out)]) == 0
    report = json.loads((out / "rates.json").read_text())
    assert report["fits"]["energy_gap"]["slope"] == pytest.approx(-1.0, abs=1e-10)
    assert "f0_h1" not in report["fits"]
    assert set(report["monitors"]) == {"alg_E", "alg_c", "gn", "H_G0"}
    lines = (out / "plotdata" / "energy_gap.dat").read_text().splitlines()
    assert lines[0].startswith("#") and len(lines) == 41


def test_analyze_failure_and_errors(tmp_path):
    t = np.concatenate([[0.0], np.geomspace(1, 1000, 40)])
    path = tmp_path / "flat.csv"
    write_synthetic(path, t, np.ones_like(t))  # energy does not decay: slope 0
    assert main(["analyze", str(path), "--window", "10:1000", "--out", str(tmp_path)]) == 3
    assert main(["analyze", str(path), "--window", "10:50", "--out", str(tmp_path)]) == 1
    assert main(["analyze", str(path), "--window", "ten", "--out", str(tmp_path)]) == 1
    bad = tmp_path / "bad.csv"
    bad.write_text("t,energy_gap\n1,2\n")
    assert main(["analyze", str(bad), "--out", str(tmp_path)]) == 1


def test_odecheck_single_point(tmp_path):
    assert main(["odecheck", "--set", "E0=1", "--set", "H0=1", "--set", "c_star=1",
                 "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "ode-report.json").read_text())
    assert report["pass"] and len(report["points"]) == 2


def test_odecheck_rejects_small_c_star(tmp_path, capsys):
    assert main(["odecheck", "--set", "c_star=0.1", "--out", str(tmp_path)]) == 1
    assert "c_star" in capsys.readouterr().err


def test_kernel_command(tmp_path):
    assert main(["kernel", "--t", "0.1,1,10", "--j", "0,1", "--out", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "kernel-scaling.csv")
    assert rows[0] == ["t", "j", "l1norm", "scaled"]
    j0 = [float(r[2]) for r in rows[1:] if r[1] == "0"]
    assert min(j0) >= 1.0


@pytest.mark.parametrize("t", ["", "0,1", "-1"])
def test_kernel_invalid_times(tmp_path, t):
    assert main(["kernel", "--t", t, "--out", str(tmp_path)]) == 1


def test_usage_errors():
    assert main([]) == 1
    assert main(["frobnicate"]) == 1
