"""Plain ``key = value`` run configurations and sweep manifests."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .cylinder import Cylinder
from .errors import InvalidArgumentError
from .field import CLAMPED, PERIODIC, Field, Grid
from .regularity import REPORT_DIAGNOSTICS as DIAGNOSTICS
from .solver import SCHEMES, SolverConfig, default_dt, manufactured_forcing

INITIAL_FAMILIES = ("zero", "sine", "multi_sine", "random_bandlimited")
FORCINGS = ("none", "manufactured")


class ConfigError(InvalidArgumentError):
    pass


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text: str):
    return None if text.strip().lower() in ("", "auto", "none") else float(text)


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.replace(",", " ").split())


def _str_list(text: str) -> tuple[str, ...]:
    return tuple(t for t in text.replace(",", " ").split())


def _fmt(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    return str(value)


_PARSERS = {"float": float, "int": int, "str": str, "bool": _bool,
            "opt_float": _opt_float, "ints": _int_list, "strs": _str_list}


@dataclass(frozen=True)
class RunConfig:
    """One simulation plus its diagnostics.  Every field has a default."""
    # grid
    kind: str = field(default=PERIODIC, metadata={"type": "str"})
    length: float = field(default=2.0 * math.pi, metadata={"type": "float"})
    n: int = field(default=128, metadata={"type": "int"})
    # solver ("auto" dt picks the resolution-scaled default)
    dt: float | None = field(default=None, metadata={"type": "opt_float"})
    t_start: float = field(default=0.0, metadata={"type": "float"})
    t_end: float = field(default=0.1, metadata={"type": "float"})
    store_every: int = field(default=1, metadata={"type": "int"})
    scheme: str = field(default="auto", metadata={"type": "str"})
    cfl_safety: float = field(default=1.0, metadata={"type": "float"})
    nonlinear: bool = field(default=True, metadata={"type": "bool"})
    forcing: str = field(default="none", metadata={"type": "str"})
    # initial data
    init: str = field(default="sine", metadata={"type": "str"})
    amplitude: float = field(default=1.0, metadata={"type": "float"})
    modes: tuple[int, ...] = field(default=(1,), metadata={"type": "ints"})
    seed: int = field(default=0, metadata={"type": "int"})
    # diagnostics ("auto" places the cylinder at the domain centre and final time)
    diagnostics: tuple[str, ...] = field(default=DIAGNOSTICS, metadata={"type": "strs"})
    x0: float | None = field(default=None, metadata={"type": "opt_float"})
    t0: float | None = field(default=None, metadata={"type": "opt_float"})
    r: float = field(default=0.25, metadata={"type": "float"})
    epsilon: float = field(default=0.1, metadata={"type": "float"})
    gamma: float = field(default=0.5, metadata={"type": "float"})
    levels: int = field(default=2, metadata={"type": "int"})
    # outputs
    trajectory: str = field(default="trajectory.sgm", metadata={"type": "str"})
    energy: str = field(default="energy.csv", metadata={"type": "str"})
    report: str = field(default="report.json", metadata={"type": "str"})

    def __post_init__(self):
        checks = [
            ("kind", self.kind in (PERIODIC, CLAMPED), f"one of {PERIODIC}, {CLAMPED}"),
            ("length", self.length > 0, "positive"),
            ("n", self.n >= 8, ">= 8"),
            ("dt", self.dt is None or self.dt > 0, "positive or auto"),
            ("t_end", self.t_end > self.t_start, "greater than t_start"),
            ("store_every", self.store_every >= 1, ">= 1"),
            ("scheme", self.scheme == "auto" or self.scheme in SCHEMES, f"auto or one of {SCHEMES}"),
            ("cfl_safety", 0 < self.cfl_safety <= 1, "in (0, 1]"),
            ("forcing", self.forcing in FORCINGS, f"one of {FORCINGS}"),
            ("init", self.init in INITIAL_FAMILIES, f"one of {INITIAL_FAMILIES}"),
            ("modes", len(self.modes) > 0 and min(self.modes) >= 1, "positive integers"),
            ("diagnostics", set(self.diagnostics) <= set(DIAGNOSTICS), f"subset of {DIAGNOSTICS}"),
            ("r", self.r > 0, "positive"),
            ("epsilon", self.epsilon > 0, "positive"),
            ("gamma", 0 < self.gamma <= 1, "in (0, 1]"),
            ("levels", self.levels >= 1, ">= 1"),
        ]
        for key, ok, need in checks:
            if not ok:
                raise ConfigError(f"{key} = {_fmt(getattr(self, key))}: must be {need}")
        if self.kind == PERIODIC and self.n % 2:
            raise ConfigError(f"n = {self.n}: periodic grids need an even n")

    # ---------------------------------------------------------- building

    def grid(self) -> Grid:
        return Grid(self.kind, self.length, self.n)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            dt=self.dt if self.dt is not None else default_dt(self.n, self.cfl_safety),
            t_end=self.t_end, store_every=self.store_every,
            scheme=None if self.scheme == "auto" else self.scheme,
            forcing=manufactured_forcing if self.forcing == "manufactured" else None,
            cfl_safety=self.cfl_safety, t_start=self.t_start, nonlinear=self.nonlinear)

    def initial_field(self) -> Field:
        return initial_field(self.grid(), self.init, self.amplitude, self.modes, self.seed)

    def cylinder(self, t_end: float | None = None) -> Cylinder:
        g = self.grid()
        x0 = self.x0 if self.x0 is not None else (0.5 * g.length if g.periodic else 0.0)
        t0 = self.t0 if self.t0 is not None else (self.t_end if t_end is None else t_end)
        return Cylinder(x0, t0, self.r)

    # ------------------------------------------------------ serialisation

    def as_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = list(value) if isinstance(value, tuple) else value
        return out

    def to_text(self) -> str:
        return "".join(f"{f.name} = {_fmt(getattr(self, f.name))}\n" for f in fields(self))

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> "RunConfig":
        values, extra = parse_pairs(text, source, allow_axes=False)
        return build_config(values, source)


_FIELDS = {f.name: f for f in fields(RunConfig)}


def parse_pairs(text: str, source: str, allow_axes: bool, extra_keys=()):
    """``key = value`` lines into ``{key: (raw, lineno)}`` plus sweep-level entries."""
    values, extra = {}, {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {body!r}")
        key, raw = (s.strip() for s in body.split("=", 1))
        if allow_axes and (key.startswith("axis.") or key in extra_keys):
            target = extra
            if key.startswith("axis.") and key[5:] not in _FIELDS:
                raise ConfigError(f"{source}:{lineno}: unknown sweep axis {key[5:]!r}")
        elif key in _FIELDS:
            target = values
        else:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in target:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        target[key] = (raw, lineno)
    return values, extra


def _convert(key: str, raw: str, where: str):
    kind = _FIELDS[key].metadata["type"]
    try:
        return _PARSERS[kind](raw)
    except ValueError as exc:
        raise ConfigError(f"{where}: bad value for {key!r}: {exc}") from None


def build_config(values: dict, source: str, base: RunConfig | None = None) -> RunConfig:
    kwargs = {key: _convert(key, raw, f"{source}:{lineno}") for key, (raw, lineno) in values.items()}
    try:
        return replace(base, **kwargs) if base is not None else RunConfig(**kwargs)
    except ConfigError as exc:
        key = str(exc).split(" ", 1)[0]
        line = values.get(key, (None, None))[1]
        prefix = f"{source}:{line}: " if line is not None else f"{source}: "
        raise ConfigError(prefix + str(exc)) from None


def read_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return RunConfig.from_text(fh.read(), str(path))


# --------------------------------------------------------- initial data

def initial_field(grid: Grid, family: str, amplitude: float, modes, seed: int) -> Field:
    """Named initial data.  Clamped grids use ``sin^2`` shapes so that
    ``v = v_x = 0`` holds at both ends."""
    if family not in INITIAL_FAMILIES:
        raise ConfigError(f"unknown initial family {family!r}")
    modes = tuple(modes)
    if grid.periodic:
        y = 2.0 * math.pi * grid.x / grid.length
        basis = lambda m: np.sin(m * y)  # noqa: E731
        cbasis = lambda m: np.cos(m * y)  # noqa: E731
    else:
        y = math.pi * (grid.x - grid.origin) / grid.length
        basis = lambda m: np.sin(m * y) ** 2  # noqa: E731
        cbasis = lambda m: np.sin(m * y) ** 2 * np.cos(m * y)  # noqa: E731
    if family == "zero":
        values = np.zeros(grid.n)
    elif family == "sine":
        values = amplitude * basis(modes[0])
    elif family == "multi_sine":
        values = amplitude * sum(basis(m) for m in modes)
    else:
        rng = np.random.default_rng(seed)
        a = rng.standard_normal(len(modes))
        b = rng.standard_normal(len(modes))
        values = amplitude * sum(ai * cbasis(m) + bi * basis(m) for m, ai, bi in zip(modes, a, b))
        if not grid.periodic:
            values[0] = values[-1] = 0.0
    return Field(grid, values)


# --------------------------------------------------------------- sweeps

SWEEP_KEYS = ("jobs", "out_dir")


@dataclass(frozen=True)
class SweepJob:
    job_id: str
    overrides: tuple[tuple[str, str], ...]
    config: RunConfig


@dataclass(frozen=True)
class SweepManifest:
    """Base config, axes (field -> raw values) and sweep-level settings.

    The job set is the cartesian product of the axes in file order; the
    ledger lives in ``out_dir``.
    """
    base: RunConfig
    axes: tuple[tuple[str, tuple[str, ...]], ...]
    jobs: int = 1
    out_dir: str = "sweep"
    source: str = "<manifest>"

    def job_list(self) -> list[SweepJob]:
        names = [name for name, _ in self.axes]
        out = []
        for idx, combo in enumerate(itertools.product(*(vals for _, vals in self.axes))):
            overrides = tuple(zip(names, combo))
            cfg = build_config({k: (v, None) for k, v in overrides}, self.source, self.base)
            out.append(SweepJob(f"job-{idx:04d}", overrides, cfg))
        return out

    def to_text(self) -> str:
        lines = [f"jobs = {self.jobs}\n", f"out_dir = {self.out_dir}\n"]
        lines += [f"axis.{name} = {', '.join(vals)}\n" for name, vals in self.axes]
        return "".join(lines) + self.base.to_text()

    @classmethod
    def from_text(cls, text: str, source: str = "<manifest>") -> "SweepManifest":
        values, extra = parse_pairs(text, source, allow_axes=True, extra_keys=SWEEP_KEYS)
        base = build_config(values, source)
        axes = []
        for key, (raw, lineno) in extra.items():
            if key.startswith("axis."):
                vals = tuple(v.strip() for v in raw.split(",") if v.strip())
                if not vals:
                    raise ConfigError(f"{source}:{lineno}: axis {key[5:]!r} has no values")
                axes.append((key[5:], vals))
        jobs, out_dir = 1, "sweep"
        if "jobs" in extra:
            raw, lineno = extra["jobs"]
            try:
                jobs = int(raw)
            except ValueError:
                raise ConfigError(f"{source}:{lineno}: bad value for 'jobs': {raw!r}") from None
            if jobs < 1:
                raise ConfigError(f"{source}:{lineno}: jobs must be >= 1")
        if "out_dir" in extra:
            out_dir = extra["out_dir"][0]
        manifest = cls(base, tuple(axes), jobs, out_dir, source)
        manifest.job_list()  # validate every combination up front
        return manifest


def read_manifest(path) -> SweepManifest:
    with open(path, encoding="utf-8") as fh:
        return SweepManifest.from_text(fh.read(), str(path))
