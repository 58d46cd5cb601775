import json
import math

import numpy as np
import pytest

from surfgrow.cli import main
from surfgrow.cylinder import read_trajectory


def write(path, text):
    path.write_text(text)
    return str(path)


@pytest.fixture
def small_cfg(tmp_path):
    return write(tmp_path / "run.cfg", "amplitude = 0.1\nn = 128\ndt = 1e-4\nt_end = 0.02\nr = 0.3\n"
                 "trajectory = {0}/t.sgm\nenergy = {0}/e.csv\n".format(tmp_path))


def test_simulate_and_diagnose(tmp_path, small_cfg, capsys):
    assert main(["simulate", small_cfg]) == 0
    assert "max_energy_residual=" in capsys.readouterr().out
    traj = read_trajectory(tmp_path / "t.sgm")
    assert traj.count == 201
    out = tmp_path / "report.json"
    csv_path = tmp_path / "flags.csv"
    code = main(["diagnose", str(tmp_path / "t.sgm"), "--cylinder", f"{math.pi},0.02,0.3",
                 "--energy", str(tmp_path / "e.csv"), "--out", str(out),
                 "--classify", str(csv_path), "--R-test", "0.3", "--stride", "8"])
    assert code == 0
    rep = json.loads(out.read_text())
    assert rep["cylinder"]["r"] == 0.3 and "small_I" in rep["flags"]
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "x,t,flag" and len(lines) > 1


def test_diagnose_is_byte_deterministic(tmp_path, small_cfg):
    main(["simulate", small_cfg])
    outs = []
    for name in ("a.json", "b.json"):
        main(["diagnose", str(tmp_path / "t.sgm"), "--config", small_cfg, "--out", str(tmp_path / name)])
        outs.append((tmp_path / name).read_bytes())
    assert outs[0] == outs[1]


def test_verify_manufactured(tmp_path, capsys):
    cfg = write(tmp_path / "m.cfg", "forcing = manufactured\ndt = 1e-4\nt_end = 0.05\nstore_every = 100\n"
                f"trajectory = {tmp_path}/m.sgm\nenergy = {tmp_path}/m.csv\n")
    assert main(["simulate", cfg, "--verify"]) == 0
    assert "manufactured_error=" in capsys.readouterr().out


def test_verify_requires_forcing(tmp_path, small_cfg):
    assert main(["simulate", small_cfg, "--verify"]) == 2


def test_bad_config_exit_code(tmp_path, capsys):
    cfg = write(tmp_path / "bad.cfg", "n = 64\ndt = -1\n")
    assert main(["simulate", cfg]) == 2
    assert "bad.cfg:2" in capsys.readouterr().err
    assert main(["simulate", write(tmp_path / "u.cfg", "colour = red\n")]) == 2


def test_missing_file_exit_code(tmp_path):
    assert main(["simulate", str(tmp_path / "nope.cfg")]) == 2


def test_blowup_exit_code(tmp_path, capsys):
    cfg = write(tmp_path / "b.cfg", f"amplitude = 40\ndt = 0.01\nt_end = 5\n"
                f"trajectory = {tmp_path}/b.sgm\nenergy = {tmp_path}/b.csv\n")
    assert main(["simulate", cfg]) == 3
    assert "blowup_t=" in capsys.readouterr().err


def test_fixture_and_out_of_domain(tmp_path, capsys):
    path = str(tmp_path / "lin.sgm")
    assert main(["fixture", "linear_x", "--out", path]) == 0
    capsys.readouterr()
    assert main(["diagnose", path, "--cylinder", "0,0,1"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["I"] == pytest.approx(2.0, abs=1e-5)
    assert main(["diagnose", path, "--cylinder", "1.5,0,1"]) == 4


def test_linear_point_value(capsys):
    assert main(["linear", "--beta", "2", "--t", "1", "--at", "0"]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(math.exp(-1) * math.sin(2), abs=1e-12)


def test_linear_profile_and_probe(capsys):
    assert main(["linear", "--n", "16", "--t", "0.5"]) == 0
    rows = [tuple(map(float, line.split(","))) for line in capsys.readouterr().out.splitlines()]
    assert len(rows) == 16
    assert rows[4][1] == pytest.approx(math.exp(-0.5) * math.sin(rows[4][0]), abs=1e-12)
    assert main(["linear", "--probe", "--theta", "0.125"]) == 0
    res = json.loads(capsys.readouterr().out)
    assert res["theta"] == 0.125 and res["excess"] > 0
    assert main(["linear", "--probe", "--theta", "0.7"]) == 2


def test_ineq(capsys):
    assert main(["ineq", "--samples", "20", "--seed", "1"]) == 0
    est = json.loads(capsys.readouterr().out)
    assert est["samples"] == 20 and 0 < est["value"] < 2


def test_sweep_command(tmp_path, capsys):
    out = tmp_path / "sw"
    m = write(tmp_path / "m.txt", f"out_dir = {out}\naxis.amplitude = 0.01, 0.02\nn = 128\n"
              "dt = 1e-4\nt_end = 0.01\ndiagnostics = I\nr = 0.3\n")
    assert main(["sweep", m]) == 0
    assert "jobs=2 ok=2" in capsys.readouterr().out
    assert json.loads((out / "index.json").read_text())["jobs"][1]["status"] == "ok"
