"""Biparabolic cylinders, space-time trajectories, cutoffs and weighted means.

A cylinder ``Q_r(x0, t0)`` is ``(x0 - r, x0 + r) x (t0 - r**4, t0]``.  All
space-time integrals integrate the piecewise-linear interpolant of the
samples, so the integration window matches the cylinder footprint
exactly (fractional end cells in both space and time).
"""
from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from functools import cached_property
from math import comb

import numpy as np
from numpy.polynomial import Polynomial

from .errors import (HistoryTooShortError, InvalidArgumentError,
                     OutOfDomainError, ResolutionError)
from .field import CLAMPED, PERIODIC, Field, Grid, diff_array

MIN_SPACE_POINTS = 8
MIN_SNAPSHOTS = 4
_SNAP = 1e-9


@dataclass(frozen=True)
class Cylinder:
    x0: float
    t0: float
    r: float

    def __post_init__(self):
        if not (self.r > 0 and math.isfinite(self.r)):
            raise InvalidArgumentError(f"cylinder radius must be positive and finite, got {self.r!r}")

    @property
    def t_bottom(self) -> float:
        return self.t0 - self.r ** 4

    @property
    def duration(self) -> float:
        return self.r ** 4

    @property
    def volume(self) -> float:
        return 2.0 * self.r ** 5

    def shrink(self, factor: float) -> "Cylinder":
        """Concentric cylinder (same top time) with radius ``factor * r``."""
        return Cylinder(self.x0, self.t0, self.r * factor)

    def as_dict(self) -> dict:
        return {"x0": self.x0, "t0": self.t0, "r": self.r}


# ---------------------------------------------------------------- cutoffs

def smoothstep(continuity: int) -> Polynomial:
    """Polynomial ramp from 0 to 1 on [0, 1] whose first ``continuity``
    derivatives vanish at both ends (degree ``2*continuity + 1``)."""
    u = Polynomial([0.0, 1.0])
    s = sum(comb(continuity + j, j) * (1 - u) ** j for j in range(continuity + 1))
    return u ** (continuity + 1) * s


@dataclass(frozen=True)
class BumpProfile:
    """Shape of the reference cutoffs.

    ``phi0`` is 1 on ``[-plateau, plateau]`` and 0 outside ``(-1, 1)``;
    ``chi0`` is 0 for ``tau <= -1`` and 1 for ``tau >= -plateau**4``.  Both
    ramps are smoothsteps of the given continuity order.
    """
    continuity: int = 4
    plateau: float = 0.5

    def __post_init__(self):
        if self.continuity < 4:
            raise InvalidArgumentError("cutoff profiles must be at least C^4")
        if not 0 < self.plateau < 1:
            raise InvalidArgumentError("plateau must lie in (0, 1)")

    @cached_property
    def ramp_derivs(self) -> tuple[Polynomial, ...]:
        s = smoothstep(self.continuity)
        return tuple(s.deriv(m) if m else s for m in range(5))

    def phi0(self, y, order: int = 0) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        a = np.abs(y)
        width = 1.0 - self.plateau
        out = np.zeros_like(y)
        ramp = (a > self.plateau) & (a < 1.0)
        u = (1.0 - a[ramp]) / width
        sign = np.where(y[ramp] >= 0, -1.0, 1.0) ** order
        out[ramp] = self.ramp_derivs[order](u) * sign / width ** order
        if order == 0:
            out[a <= self.plateau] = 1.0
        return out

    def chi0(self, tau, order: int = 0) -> np.ndarray:
        tau = np.asarray(tau, dtype=float)
        top = -self.plateau ** 4
        width = 1.0 - self.plateau ** 4
        out = np.zeros_like(tau)
        ramp = (tau > -1.0) & (tau < top)
        out[ramp] = self.ramp_derivs[order]((tau[ramp] + 1.0) / width) / width ** order
        if order == 0:
            out[tau >= top] = 1.0
        return out


DEFAULT_PROFILE = BumpProfile()


@dataclass(frozen=True)
class CutoffSystem:
    """``eta(x, t) = chi(t) * phi(x)`` adapted to the cylinder ``Q_r(x0, t0)``."""
    x0: float
    r: float
    t0: float = 0.0
    profile: BumpProfile = DEFAULT_PROFILE

    @classmethod
    def for_cylinder(cls, q: Cylinder, profile: BumpProfile = DEFAULT_PROFILE) -> "CutoffSystem":
        return cls(q.x0, q.r, q.t0, profile)

    def phi(self, x, order: int = 0) -> np.ndarray:
        return self.profile.phi0((np.asarray(x, dtype=float) - self.x0) / self.r, order) / self.r ** order

    def chi(self, t, order: int = 0) -> np.ndarray:
        scale = self.r ** 4
        return self.profile.chi0((np.asarray(t, dtype=float) - self.t0) / scale, order) / scale ** order

    def phi_on_grid(self, grid: Grid, order: int = 0) -> np.ndarray:
        """phi at the grid points, wrapping displacements on periodic grids."""
        disp = _displacement(grid, self.x0)
        if not grid.periodic:
            lo, hi = grid.origin, grid.origin + grid.length
            if self.x0 - self.r < lo - _SNAP * grid.spacing or self.x0 + self.r > hi + _SNAP * grid.spacing:
                raise OutOfDomainError(
                    f"cutoff support ({self.x0 - self.r}, {self.x0 + self.r}) leaves the clamped domain")
        elif 2 * self.r >= grid.length:
            raise OutOfDomainError("cutoff support wraps onto itself on this periodic grid")
        return self.profile.phi0(disp / self.r, order) / self.r ** order


def cutoff_eval(cut: CutoffSystem, x, t, dx_order: int = 0, dt_order: int = 0):
    """``d^dt/dt d^dx/dx [chi(t) phi(x)]`` from the closed-form polynomials."""
    if dx_order not in range(5) or dt_order not in range(2):
        raise InvalidArgumentError("cutoff derivatives limited to dx<=4, dt<=1")
    val = cut.chi(t, dt_order) * cut.phi(x, dx_order)
    return float(val) if np.ndim(val) == 0 else val


def _displacement(grid: Grid, x0: float) -> np.ndarray:
    d = grid.x - x0
    if grid.periodic:
        d = (d + 0.5 * grid.length) % grid.length - 0.5 * grid.length
    return d


# ------------------------------------------------------------- trajectories

@dataclass(frozen=True)
class Trajectory:
    """Snapshots ``values[j]`` of v at times ``t_start + j * dt_store``.

    ``vx`` and ``vxx`` are computed once here so the object can be shared
    read-only between threads.
    """
    grid: Grid
    t_start: float
    dt_store: float
    values: np.ndarray = field(repr=False)
    vx: np.ndarray = field(init=False, repr=False, compare=False)
    vxx: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 or values.shape[1] != self.grid.n or values.shape[0] < 1:
            raise InvalidArgumentError(
                f"trajectory values need shape (count, {self.grid.n}), got {values.shape}")
        if not self.dt_store > 0:
            raise InvalidArgumentError(f"dt_store must be positive, got {self.dt_store!r}")
        if not np.all(np.isfinite(values)):
            raise InvalidArgumentError("trajectory snapshots must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        for name, order in (("vx", 1), ("vxx", 2)):
            arr = diff_array(values, self.grid, order)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def count(self) -> int:
        return self.values.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.t_start + self.dt_store * np.arange(self.count)

    @property
    def t_end(self) -> float:
        return self.t_start + self.dt_store * (self.count - 1)

    def snapshot(self, j: int) -> Field:
        return Field(self.grid, self.values[j])

    @property
    def snapshots(self) -> list[Field]:
        return [self.snapshot(j) for j in range(self.count)]

    def with_values(self, values: np.ndarray) -> "Trajectory":
        return Trajectory(self.grid, self.t_start, self.dt_store, values)


def static_trajectory(grid: Grid, func, t_start: float, dt_store: float, count: int) -> Trajectory:
    """Sample ``func(x, t)`` on the grid at ``count`` equally spaced times."""
    times = t_start + dt_store * np.arange(count)
    x = grid.x
    values = np.array([np.broadcast_to(func(x, t), x.shape) for t in times], dtype=float)
    return Trajectory(grid, t_start, dt_store, values)


# ------------------------------------------------------ exact-extent weights

def interval_weights(origin: float, h: float, n: int, a: float, b: float,
                     periodic: bool) -> tuple[np.ndarray, np.ndarray]:
    """Indices and weights integrating the linear interpolant over ``[a, b]``.

    Samples sit at ``origin + i*h`` for ``i = 0..n-1``.  Returned indices are
    unwrapped; reduce them modulo ``n`` on periodic grids.
    """
    if b < a:
        raise InvalidArgumentError("empty integration window")
    sa = (a - origin) / h
    sb = (b - origin) / h
    sa = round(sa) if abs(sa - round(sa)) < _SNAP else sa
    sb = round(sb) if abs(sb - round(sb)) < _SNAP else sb
    if periodic:
        if sb - sa >= n:
            raise OutOfDomainError("window longer than the periodic domain")
    elif sa < 0 or sb > n - 1:
        raise OutOfDomainError(f"window [{a}, {b}] outside sampled range "
                               f"[{origin}, {origin + (n - 1) * h}]")
    i0, i1 = math.floor(sa), math.ceil(sb)
    if i1 == i0:
        i1 = i0 + 1
    cells = np.arange(i0, i1)
    p = np.clip(sa - cells, 0.0, 1.0)
    q = np.clip(sb - cells, 0.0, 1.0)
    w = np.zeros(i1 - i0 + 1)
    w[:-1] += h * ((q - q * q / 2) - (p - p * p / 2))
    w[1:] += h * (q * q / 2 - p * p / 2)
    idx = np.arange(i0, i1 + 1)
    if not periodic and i1 > n - 1:  # zero-length window on the last sample
        idx, w = idx[:-1], w[:-1]
    return idx, w


@dataclass(frozen=True)
class CylinderSample:
    """Sample indices and quadrature weights of one cylinder in a trajectory."""
    ix: np.ndarray
    wx: np.ndarray
    x: np.ndarray
    jt: np.ndarray
    wt: np.ndarray
    t: np.ndarray
    n_space: int
    n_time: int

    @property
    def weight_total(self) -> float:
        return float(self.wx.sum() * self.wt.sum())

    def block(self, arr: np.ndarray) -> np.ndarray:
        return arr[np.ix_(self.jt, self.ix)]

    def integrate(self, block: np.ndarray) -> float:
        return float(self.wt @ block @ self.wx)


def sample_cylinder(traj: Trajectory, q: Cylinder, *, guard: bool = True) -> CylinderSample:
    grid = traj.grid
    h = grid.spacing
    ix, wx = interval_weights(grid.origin, h, grid.n, q.x0 - q.r, q.x0 + q.r, grid.periodic)
    x = grid.origin + h * ix
    ix = ix % grid.n
    jt, wt = interval_weights(traj.t_start, traj.dt_store, traj.count,
                              q.t_bottom, q.t0, periodic=False)
    t = traj.t_start + traj.dt_store * jt
    n_space = int(np.count_nonzero((x > q.x0 - q.r + _SNAP * h) & (x < q.x0 + q.r - _SNAP * h)))
    tol = _SNAP * traj.dt_store
    n_time = int(np.count_nonzero((t > q.t_bottom + tol) & (t <= q.t0 + tol)))
    if guard and (n_space < MIN_SPACE_POINTS or n_time < MIN_SNAPSHOTS):
        raise ResolutionError(
            f"cylinder r={q.r:g} holds {n_space} grid points and {n_time} snapshots; "
            f"need >= {MIN_SPACE_POINTS} and >= {MIN_SNAPSHOTS}")
    return CylinderSample(ix, wx, x, jt, wt, t, n_space, n_time)


def resolvable(traj: Trajectory, q: Cylinder) -> bool:
    try:
        sample_cylinder(traj, q)
    except (ResolutionError, OutOfDomainError):
        return False
    return True


INTEGRANDS = ("vx_p", "vxx_2", "vhat_x_p", "vhat_xx_2", "v_p")


def cylinder_integral(traj: Trajectory, q: Cylinder, integrand: str, p: float = 3.0) -> float:
    """Integral over ``q`` of one of ``|v_x|^p``, ``|v_xx|^2``, ``|v|^p`` or
    their oscillation counterparts (``v_hat`` differs from ``v`` by a function
    of time only, so its derivatives coincide with those of ``v``)."""
    if integrand not in INTEGRANDS:
        raise InvalidArgumentError(f"unknown integrand {integrand!r}; pick one of {INTEGRANDS}")
    if not p >= 1:
        raise InvalidArgumentError(f"integrand exponent must be >= 1, got {p!r}")
    s = sample_cylinder(traj, q)
    if integrand in ("vx_p", "vhat_x_p"):
        block = np.abs(s.block(traj.vx)) ** p
    elif integrand in ("vxx_2", "vhat_xx_2"):
        block = s.block(traj.vxx) ** 2
    else:
        block = np.abs(s.block(traj.values)) ** p
    return s.integrate(block)


def cylinder_mean(traj: Trajectory, q: Cylinder, arr: np.ndarray) -> float:
    s = sample_cylinder(traj, q)
    return s.integrate(s.block(arr)) / s.weight_total


def gradient_excess(traj: Trajectory, q: Cylinder, p: float = 3.0) -> float:
    """``(mean over q of |v_x - (v_x)_q|^p)^(1/p)`` with plain cylinder means."""
    if not p >= 1:
        raise InvalidArgumentError(f"excess exponent must be >= 1, got {p!r}")
    s = sample_cylinder(traj, q)
    block = s.block(traj.vx)
    total = s.weight_total
    mean = s.integrate(block) / total
    dev = np.abs(block - mean)
    scale = float(np.max(np.abs(block))) if block.size else 0.0
    if float(dev.max(initial=0.0)) <= 64 * np.finfo(float).eps * scale:
        return 0.0
    return (s.integrate(dev ** p) / total) ** (1.0 / p)


# --------------------------------------------------- means and oscillations

def _mean_weights(grid: Grid, cut: CutoffSystem) -> np.ndarray:
    w = cut.phi_on_grid(grid) * grid.weights
    return w / w.sum()


def phi_mean(f: Field, x0: float, r: float, cut: CutoffSystem | None = None) -> float:
    """``int f phi / int phi`` with the bump of ``cut`` (default profile)."""
    cut = cut or CutoffSystem(x0, r)
    if not (math.isclose(cut.x0, x0) and math.isclose(cut.r, r)):
        raise InvalidArgumentError("cutoff system is not centred at (x0, r)")
    return float(np.dot(f.values, _mean_weights(f.grid, cut)))


@dataclass(frozen=True)
class OscillationField:
    base: Trajectory
    x0: float
    r: float
    mean_series: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    def to_trajectory(self) -> Trajectory:
        return self.base.with_values(self.values)


def oscillation(traj: Trajectory, x0: float, r: float, t0: float | None = None,
                profile: BumpProfile = DEFAULT_PROFILE) -> OscillationField:
    """Subtract the phi-related mean over ``(x0 - r, x0 + r)`` snapshot by snapshot.

    When ``t0`` is given the record must reach back to ``t0 - r**4``.
    """
    if t0 is not None and t0 - r ** 4 < traj.t_start - _SNAP * traj.dt_store:
        raise HistoryTooShortError(
            f"oscillation needs history from t={t0 - r ** 4!r}, record starts at {traj.t_start!r}")
    w = _mean_weights(traj.grid, CutoffSystem(x0, r, 0.0 if t0 is None else t0, profile))
    means = traj.values @ w
    values = traj.values - means[:, None]
    means.setflags(write=False)
    return OscillationField(traj, x0, r, means, values)


# ---------------------------------------------------------------- file I/O

FORMAT_VERSION = 1


def atomic_write_bytes(path, payload: bytes) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def trajectory_bytes(traj: Trajectory) -> bytes:
    header = {
        "version": FORMAT_VERSION,
        "kind": traj.grid.kind,
        "length": traj.grid.length,
        "n": traj.grid.n,
        "t_start": traj.t_start,
        "dt_store": traj.dt_store,
        "count": traj.count,
    }
    line = json.dumps(header, separators=(",", ":")) + "\n"
    payload = np.ascontiguousarray(traj.values, dtype="<f8").tobytes()
    return line.encode("ascii") + payload


def write_trajectory(path, traj: Trajectory) -> None:
    atomic_write_bytes(path, trajectory_bytes(traj))


class TrajectoryFormatError(InvalidArgumentError):
    pass


def read_trajectory(path) -> Trajectory:
    with open(path, "rb") as fh:
        raw = fh.read()
    nl = raw.find(b"\n")
    if nl < 0:
        raise TrajectoryFormatError(f"{path}: missing header line")
    try:
        header = json.loads(raw[:nl].decode("ascii"))
        version = header["version"]
        kind = header["kind"]
        length = float(header["length"])
        n = int(header["n"])
        t_start = float(header["t_start"])
        dt_store = float(header["dt_store"])
        count = int(header["count"])
    except (ValueError, KeyError, TypeError, UnicodeDecodeError) as exc:
        raise TrajectoryFormatError(f"{path}: bad header ({exc})") from exc
    if version != FORMAT_VERSION:
        raise TrajectoryFormatError(f"{path}: unsupported version {version!r}")
    if kind not in (PERIODIC, CLAMPED):
        raise TrajectoryFormatError(f"{path}: unknown grid kind {kind!r}")
    body = raw[nl + 1:]
    if len(body) != 8 * n * count:
        raise TrajectoryFormatError(
            f"{path}: payload has {len(body)} bytes, header promises {8 * n * count}")
    values = np.frombuffer(body, dtype="<f8").reshape(count, n)
    try:
        return Trajectory(Grid(kind, length, n), t_start, dt_store, values)
    except InvalidArgumentError as exc:
        raise TrajectoryFormatError(f"{path}: {exc}") from exc
