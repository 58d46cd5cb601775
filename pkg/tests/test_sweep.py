import dataclasses
import json
import os

import pytest

from surfgrow.config import SweepManifest
from surfgrow.sweep import LEDGER, _read_ledger, load_run, run_config, run_sweep

BASE = "n = 128\ndt = 1e-4\nt_end = 0.01\nr = 0.3\n"


def manifest(out_dir, axes, jobs=1, extra=""):
    return SweepManifest.from_text(f"out_dir = {out_dir}\njobs = {jobs}\n{axes}{BASE}{extra}")


def test_single_job_matches_direct_run(tmp_path):
    m = manifest(tmp_path / "sw", "axis.amplitude = 0.05\n")
    assert run_sweep(m).exit_code == 0
    job = m.job_list()[0]
    run_config(job.config, str(tmp_path / "direct"))
    a = (tmp_path / "sw" / job.job_id / "report.json").read_bytes()
    assert a == (tmp_path / "direct" / "report.json").read_bytes()
    traj, ledger = load_run(str(tmp_path / "direct"), job.config)
    assert traj.count == 101 and len(ledger.times) == 101


def test_ensemble_is_small_I(tmp_path):
    m = manifest(tmp_path / "sw", "axis.amplitude = 0.01, 0.02, 0.03\naxis.modes = 1, 2, 3\n",
                 extra="diagnostics = I, Y\n")
    out = run_sweep(m)
    assert (out.total, out.succeeded, out.failed) == (9, 9, 0)
    index = json.loads((tmp_path / "sw" / "index.json").read_text())
    assert len(index["jobs"]) == 9
    assert all("small_I" in j["report"]["flags"] for j in index["jobs"])


def test_resume_skips_finished_jobs(tmp_path):
    out_dir = tmp_path / "sw"
    m = manifest(out_dir, "axis.amplitude = 0.01, 0.02, 0.03\n", extra="diagnostics = I\n")
    run_sweep(m)
    reports = [out_dir / f"job-000{i}" / "report.json" for i in range(3)]
    stamps = [p.stat().st_mtime_ns for p in reports]
    # simulate an interruption before the last job was recorded
    ledger = out_dir / LEDGER
    lines = ledger.read_text().splitlines(keepends=True)
    ledger.write_text("".join(lines[:-1]) + lines[-1][:10])
    os.remove(reports[2])
    out = run_sweep(m)
    assert out.skipped == 2 and out.succeeded == 3
    assert [p.stat().st_mtime_ns for p in reports[:2]] == stamps[:2]
    assert reports[2].exists()
    assert set(_read_ledger(str(ledger))) == {"job-0000", "job-0001", "job-0002"}
    again = run_sweep(m)
    assert again.skipped == 3


def test_all_failed_exit_code(tmp_path):
    m = manifest(tmp_path / "sw", "axis.r = 0.01, 0.02\n")
    out = run_sweep(m)
    assert out.failed == 2 and out.exit_code == 5
    index = json.loads((tmp_path / "sw" / "index.json").read_text())
    assert all(j["status"] == "failed" and "ResolutionError" in j["error"] for j in index["jobs"])


def test_partial_failure_still_succeeds(tmp_path):
    out = run_sweep(manifest(tmp_path / "sw", "axis.r = 0.01, 0.3\n", extra="diagnostics = I\n"))
    assert out.failed == 1 and out.exit_code == 0


def test_worker_count_does_not_change_reports(tmp_path, monkeypatch):
    axes = "axis.amplitude = 0.01, 0.04\n"
    a = manifest("sw", axes, extra="diagnostics = I, Y\n")
    monkeypatch.chdir(tmp_path)
    run_sweep(dataclasses.replace(a, out_dir="one"), jobs=1)
    monkeypatch.setenv("SGM_JOBS", "2")
    run_sweep(dataclasses.replace(a, out_dir="two"))
    for job in a.job_list():
        assert (tmp_path / "one" / job.job_id / "report.json").read_bytes() == \
            (tmp_path / "two" / job.job_id / "report.json").read_bytes()
