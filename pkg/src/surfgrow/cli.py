"""``sgm`` command line: simulate, diagnose, linear, ineq, sweep, fixture.

Exit codes: 0 ok, 1 failed self-check, 2 bad configuration or input,
3 blow-up, 4 cylinder or window outside the record, 5 every sweep job failed.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys

import numpy as np

from . import __version__
from .config import ConfigError, initial_field, read_config, read_manifest
from .cylinder import (Cylinder, atomic_write_text, read_trajectory, static_trajectory,
                       write_trajectory)
from .errors import (BlowUpError, InvalidArgumentError, OutOfDomainError,
                     PreconditionError, ResolutionError, SGMError)
from .field import CLAMPED, PERIODIC, Grid
from .linear import LinearProblem, campanato_probe, linear_evolve
from .regularity import (REPORT_DIAGNOSTICS, build_report, classify_points, decay_experiment,
                         estimate_gabushin_constant)
from .solver import EnergyLedger, manufactured_solution, refine_window
from .sweep import energy_tolerance, run_sweep, simulate

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_BLOWUP, EXIT_DOMAIN, EXIT_SWEEP = 0, 1, 2, 3, 4, 5
VERIFY_TOL = 1e-6

FIXTURES = {
    "zero": lambda x, t: np.zeros_like(x),
    "linear_x": lambda x, t: x,
    "half_square": lambda x, t: 0.5 * x * x,
}


def _cylinder_arg(text: str) -> tuple[float, float, float]:
    try:
        x0, t0, r = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected X0,T0,R, got {text!r}") from None
    return x0, t0, r


def _err(msg: str) -> None:
    print(f"sgm: {msg}", file=sys.stderr)


# ---------------------------------------------------------------- simulate

def cmd_simulate(args) -> int:
    cfg = read_config(args.config)
    traj_path = args.out or cfg.trajectory
    energy_path = args.energy or cfg.energy
    traj, ledger = simulate(cfg, traj_path, energy_path)
    print(f"wrote {traj_path} ({traj.count} snapshots) and {energy_path}")
    print(f"max_energy_residual={ledger.max_residual:.3e}")
    if args.verify:
        if cfg.forcing != "manufactured" or not cfg.grid().periodic:
            _err("--verify needs forcing = manufactured on a periodic grid")
            return EXIT_CONFIG
        err = float(np.max(np.abs(traj.values[-1] - manufactured_solution(traj.grid.x, traj.t_end))))
        print(f"manufactured_error={err:.3e}")
        if err > VERIFY_TOL:
            _err(f"manufactured solution error {err:.3e} exceeds {VERIFY_TOL:g}")
            return EXIT_CHECK
    return EXIT_OK


# ---------------------------------------------------------------- diagnose

def cmd_diagnose(args) -> int:
    traj = read_trajectory(args.trajectory)
    cfg = read_config(args.config) if args.config else None
    if args.cylinder is not None:
        q = Cylinder(*args.cylinder)
    elif cfg is not None:
        q = cfg.cylinder(traj.t_end)
    else:
        g = traj.grid
        q = Cylinder(0.5 * g.length if g.periodic else 0.0, traj.t_end, 0.25)
    ledger = EnergyLedger.read_csv(args.energy) if args.energy else None
    decay = None
    if args.decay is not None:
        sampler = None
        if cfg is not None and traj.grid.periodic:
            solver_cfg = cfg.solver_config()
            sampler = lambda c: refine_window(traj, c, solver_cfg)  # noqa: E731
        decay = decay_experiment(traj, (q.x0, q.t0), args.decay, args.K, args.gamma_target, sampler)
    epsilon = args.epsilon if args.epsilon is not None else (cfg.epsilon if cfg else 0.1)
    gamma = args.gamma if args.gamma is not None else (cfg.gamma if cfg else 0.5)
    levels = args.levels if args.levels is not None else (cfg.levels if cfg else 2)
    report = build_report(
        traj, q, epsilon=epsilon, gamma=gamma, levels=levels,
        include=cfg.diagnostics if cfg else REPORT_DIAGNOSTICS,
        energy_residual=None if ledger is None else ledger.max_residual,
        energy_tol=energy_tolerance(cfg) if cfg else None, decay=decay,
        config=cfg.as_dict() if cfg else None)
    text = report.to_json()
    if args.out:
        atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    if args.classify:
        flags = classify_points(traj, epsilon, args.R_test or q.r, args.stride)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "t", "flag"])
        for (x, t), flag in flags.items():
            w.writerow([repr(x), repr(t), flag])
        atomic_write_text(args.classify, buf.getvalue())
    return EXIT_OK


# ------------------------------------------------------------------ linear

def cmd_linear(args) -> int:
    grid = Grid(PERIODIC, 2.0 * math.pi, args.n)
    u0 = initial_field(grid, args.u0, args.amplitude, tuple(args.modes), args.seed)
    prob = LinearProblem(args.beta, u0)
    if args.probe:
        res = campanato_probe(prob, args.theta, args.p, x_c=args.x_c, t_c=args.t_c)
        print(json.dumps(res.as_dict(), indent=2))
        return EXIT_OK
    if args.t < 0:
        raise InvalidArgumentError("--t must be >= 0")
    u = linear_evolve(prob, args.t)
    if args.at is not None:
        coeffs = prob.coeffs_at([args.t])[0] / grid.n
        coeffs[1:-1] *= 2.0
        k = prob.wavenumbers
        value = float((coeffs * np.exp(1j * k * args.at)).real.sum())
        print(f"{value:.12g}")
    else:
        for x, v in zip(grid.x, u.values):
            print(f"{float(x)!r},{float(v)!r}")
    return EXIT_OK


# -------------------------------------------------------------------- ineq

def cmd_ineq(args) -> int:
    est = estimate_gabushin_constant(args.samples, args.seed, n=args.n, modes=args.modes)
    print(json.dumps(est.as_dict(), indent=2))
    return EXIT_OK


# ------------------------------------------------------------------- sweep

def cmd_sweep(args) -> int:
    manifest = read_manifest(args.manifest)
    outcome = run_sweep(manifest, jobs=args.jobs)
    print(f"jobs={outcome.total} ok={outcome.succeeded} failed={outcome.failed} "
          f"skipped={outcome.skipped}")
    return outcome.exit_code


# ----------------------------------------------------------------- fixture

def cmd_fixture(args) -> int:
    grid = Grid(args.kind, args.length, args.n)
    traj = static_trajectory(grid, FIXTURES[args.name], args.t_start, args.dt_store, args.count)
    write_trajectory(args.out, traj)
    print(f"wrote {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sgm", description="Surface growth simulator and diagnostics")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run the solver from a config file")
    s.add_argument("config")
    s.add_argument("--out", help="trajectory path (default: config 'trajectory')")
    s.add_argument("--energy", help="energy CSV path (default: config 'energy')")
    s.add_argument("--verify", action="store_true", help="check the manufactured solution")
    s.set_defaults(func=cmd_simulate)

    d = sub.add_parser("diagnose", help="regularity report for a stored trajectory")
    d.add_argument("trajectory")
    d.add_argument("--cylinder", type=_cylinder_arg, metavar="X0,T0,R")
    d.add_argument("--config", help="run config (diagnostic settings, refinement for --decay)")
    d.add_argument("--energy", help="energy CSV; large residuals set post_smooth")
    d.add_argument("--epsilon", type=float)
    d.add_argument("--gamma", type=float)
    d.add_argument("--levels", type=int)
    d.add_argument("--decay", type=float, metavar="THETA", help="add a Y decay series")
    d.add_argument("--K", type=int, default=3)
    d.add_argument("--gamma-target", type=float, default=0.5)
    d.add_argument("--classify", metavar="CSV", help="write x,t,flag point labels")
    d.add_argument("--R-test", type=float)
    d.add_argument("--stride", type=int, default=1)
    d.add_argument("--out", help="report path (default: stdout)")
    d.set_defaults(func=cmd_diagnose)

    l = sub.add_parser("linear", help="exact linearised solutions and the Campanato probe")
    l.add_argument("--beta", type=float, default=0.0)
    l.add_argument("--u0", default="sine", choices=("zero", "sine", "multi_sine", "random_bandlimited"))
    l.add_argument("--amplitude", type=float, default=1.0)
    l.add_argument("--modes", type=int, nargs="+", default=[1])
    l.add_argument("--seed", type=int, default=0)
    l.add_argument("--n", type=int, default=128)
    l.add_argument("--t", type=float, default=0.0)
    l.add_argument("--at", type=float, help="print u(at, t) only")
    l.add_argument("--probe", action="store_true")
    l.add_argument("--theta", type=float, default=0.125)
    l.add_argument("--p", type=float, default=3.0)
    l.add_argument("--x-c", type=float)
    l.add_argument("--t-c", type=float, default=1.0)
    l.set_defaults(func=cmd_linear)

    i = sub.add_parser("ineq", help="empirical Gabushin constant")
    i.add_argument("--samples", type=int, default=1000)
    i.add_argument("--seed", type=int, default=0)
    i.add_argument("--n", type=int, default=256)
    i.add_argument("--modes", type=int, default=8)
    i.set_defaults(func=cmd_ineq)

    w = sub.add_parser("sweep", help="run a parameter sweep manifest")
    w.add_argument("manifest")
    w.add_argument("--jobs", type=int, help="worker count (default: SGM_JOBS or manifest)")
    w.set_defaults(func=cmd_sweep)

    f = sub.add_parser("fixture", help="write a static closed-form test trajectory")
    f.add_argument("name", choices=sorted(FIXTURES))
    f.add_argument("--out", required=True)
    f.add_argument("--kind", default=CLAMPED, choices=(PERIODIC, CLAMPED))
    f.add_argument("--length", type=float, default=4.0)
    f.add_argument("--n", type=int, default=257)
    f.add_argument("--t-start", type=float, default=-1.0)
    f.add_argument("--dt-store", type=float, default=1.0 / 256)
    f.add_argument("--count", type=int, default=257)
    f.set_defaults(func=cmd_fixture)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BlowUpError as exc:
        print(f"blowup_t={exc.t_last!r}", file=sys.stderr)
        return EXIT_BLOWUP
    except (OutOfDomainError, ResolutionError) as exc:
        _err(str(exc))
        return EXIT_DOMAIN
    except (ConfigError, InvalidArgumentError, PreconditionError) as exc:
        _err(str(exc))
        return EXIT_CONFIG
    except OSError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    except SGMError as exc:
        _err(str(exc))
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
