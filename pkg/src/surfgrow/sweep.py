"""Run pipeline (simulate, then diagnose) and resumable parallel sweeps."""
from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from filelock import FileLock

from .config import RunConfig, SweepJob, SweepManifest
from .cylinder import atomic_write_text, read_trajectory, write_trajectory
from .errors import SGMError
from .field import lp_norm
from .regularity import build_report
from .solver import EnergyLedger, evolve

ENERGY_TOL = 1e-7
LEDGER = "ledger.jsonl"
INDEX = "index.json"


def energy_tolerance(cfg: RunConfig) -> float:
    """``1e-7 (1 + E(v0))`` with ``E(v0) = ||v0||_2^2``."""
    return ENERGY_TOL * (1.0 + lp_norm(cfg.initial_field(), 2) ** 2)


def simulate(cfg: RunConfig, traj_path: str, energy_path: str):
    traj, ledger = evolve(cfg.initial_field(), cfg.solver_config())
    write_trajectory(traj_path, traj)
    ledger.write_csv(energy_path)
    return traj, ledger


def diagnose(cfg: RunConfig, traj, ledger: EnergyLedger | None, report_path: str | None):
    report = build_report(
        traj, cfg.cylinder(traj.t_end), epsilon=cfg.epsilon, gamma=cfg.gamma, levels=cfg.levels,
        include=cfg.diagnostics,
        energy_residual=None if ledger is None else ledger.max_residual,
        energy_tol=energy_tolerance(cfg), config=cfg.as_dict())
    if report_path is not None:
        atomic_write_text(report_path, report.to_json())
    return report


def run_config(cfg: RunConfig, directory: str):
    """Simulate and diagnose, writing the three output files inside ``directory``."""
    os.makedirs(directory, exist_ok=True)
    paths = [os.path.join(directory, p) for p in (cfg.trajectory, cfg.energy, cfg.report)]
    traj, ledger = simulate(cfg, paths[0], paths[1])
    return diagnose(cfg, traj, ledger, paths[2])


# ---------------------------------------------------------------- sweeps

@dataclass(frozen=True)
class SweepOutcome:
    total: int
    succeeded: int
    failed: int
    skipped: int

    @property
    def exit_code(self) -> int:
        return 5 if self.total and self.succeeded == 0 else 0


def _read_ledger(path: str) -> dict[str, dict]:
    done = {}
    if not os.path.exists(path):
        return done
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                continue  # a torn final line from an interrupted append
            done[rec["job"]] = rec
    return done


def _append_ledger(path: str, record: dict) -> None:
    with FileLock(path + ".lock"):
        torn = False
        if os.path.exists(path) and os.path.getsize(path):
            with open(path, "rb") as fh:
                fh.seek(-1, os.SEEK_END)
                torn = fh.read(1) != b"\n"
        with open(path, "a", encoding="utf-8") as fh:
            # close off a torn line so the new record parses on its own
            fh.write(("\n" if torn else "") + json.dumps(record, sort_keys=True) + "\n")
            fh.flush()
            os.fsync(fh.fileno())


def _run_job(args) -> dict:
    job, out_dir = args
    directory = os.path.join(out_dir, job.job_id)
    record = {"job": job.job_id, "overrides": dict(job.overrides)}
    try:
        run_config(job.config, directory)
        record["status"] = "ok"
    except SGMError as exc:
        record.update(status="failed", error=f"{type(exc).__name__}: {exc}")
    record["report"] = os.path.join(job.job_id, job.config.report)
    _append_ledger(os.path.join(out_dir, LEDGER), record)
    return record


def _finished(job: SweepJob, out_dir: str, ledger: dict) -> bool:
    rec = ledger.get(job.job_id)
    return (rec is not None and rec.get("status") == "ok"
            and os.path.exists(os.path.join(out_dir, job.job_id, job.config.report)))


def run_sweep(manifest: SweepManifest, jobs: int | None = None) -> SweepOutcome:
    """Run unfinished jobs and rewrite the index.  ``SGM_JOBS`` overrides the manifest."""
    out_dir = manifest.out_dir
    os.makedirs(out_dir, exist_ok=True)
    if jobs is None:
        env = os.environ.get("SGM_JOBS")
        jobs = int(env) if env else manifest.jobs
    job_list = manifest.job_list()
    ledger = _read_ledger(os.path.join(out_dir, LEDGER))
    todo = [j for j in job_list if not _finished(j, out_dir, ledger)]
    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(_run_job, [(j, out_dir) for j in todo]))
    else:
        for j in todo:
            _run_job((j, out_dir))
    ledger = _read_ledger(os.path.join(out_dir, LEDGER))
    entries, ok = [], 0
    for j in job_list:
        rec = ledger.get(j.job_id, {"status": "missing"})
        entry = {"job": j.job_id, "overrides": dict(j.overrides), "status": rec["status"]}
        if rec["status"] == "ok":
            ok += 1
            with open(os.path.join(out_dir, j.job_id, j.config.report), encoding="utf-8") as fh:
                entry["report"] = json.load(fh)
        elif "error" in rec:
            entry["error"] = rec["error"]
        entries.append(entry)
    atomic_write_text(os.path.join(out_dir, INDEX), json.dumps({"jobs": entries}, indent=2) + "\n")
    return SweepOutcome(len(job_list), ok, len(job_list) - ok, len(job_list) - len(todo))


def load_run(directory: str, cfg: RunConfig):
    traj = read_trajectory(os.path.join(directory, cfg.trajectory))
    ledger = EnergyLedger.read_csv(os.path.join(directory, cfg.energy))
    return traj, ledger
