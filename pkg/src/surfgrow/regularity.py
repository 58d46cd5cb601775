"""Regularity diagnostics on stored trajectories.

Everything here is a read-only function of a :class:`Trajectory`; unknown
constants of the theory are reported as best-constant ratios instead of
being compared against invented thresholds.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .cylinder import (DEFAULT_PROFILE, MIN_SNAPSHOTS, MIN_SPACE_POINTS, _SNAP,
                       BumpProfile, Cylinder, CutoffSystem, Trajectory,
                       cylinder_integral, gradient_excess, interval_weights,
                       oscillation, resolvable, sample_cylinder)
from .errors import (DegenerateError, InvalidArgumentError, OutOfDomainError,
                     PreconditionError, ResolutionError)
from .field import Field, Grid, derivative, lp_norm
from .solver import _trig_eval

GABUSHIN_EXPONENT = 10.0 / 3.0


# ------------------------------------------------------- I and Y on one cylinder

def scale_invariant_I(traj: Trajectory, q: Cylinder) -> float:
    """``R^-2 * int_{Q_R} |v_x|^3``."""
    return cylinder_integral(traj, q, "vx_p", 3.0) / q.r ** 2


def campanato_Y(traj: Trajectory, r: float, center: tuple[float, float]) -> float:
    """L^3 excess of ``v_x`` about its mean over ``Q_r(center)``."""
    x0, t0 = center
    return gradient_excess(traj, Cylinder(x0, t0, r), 3.0)


# ------------------------------------------------ I over families of cylinders

def _space_matrix(grid: Grid, centres: np.ndarray, r: float):
    """Rows of exact-extent weights for ``(c - r, c + r)`` and interior point counts."""
    h = grid.spacing
    mat = np.zeros((len(centres), grid.n))
    counts = np.zeros(len(centres), dtype=int)
    for row, c in enumerate(centres):
        idx, w = interval_weights(grid.origin, h, grid.n, c - r, c + r, grid.periodic)
        x = grid.origin + h * idx
        np.add.at(mat[row], idx % grid.n, w)
        counts[row] = np.count_nonzero((x > c - r + _SNAP * h) & (x < c + r - _SNAP * h))
    return mat, counts


def _time_matrix(traj: Trajectory, tops: np.ndarray, r: float):
    mat = np.zeros((len(tops), traj.count))
    counts = np.zeros(len(tops), dtype=int)
    tol = _SNAP * traj.dt_store
    for row, t0 in enumerate(tops):
        idx, w = interval_weights(traj.t_start, traj.dt_store, traj.count,
                                  t0 - r ** 4, t0, periodic=False)
        t = traj.t_start + traj.dt_store * idx
        mat[row, idx] = w
        counts[row] = np.count_nonzero((t > t0 - r ** 4 + tol) & (t <= t0 + tol))
    return mat, counts


def _I_table(traj: Trajectory, xs: np.ndarray, ts: np.ndarray, r: float,
             guard: bool = True) -> np.ndarray:
    """``I((x, t), r)`` for every pair in ``ts x xs`` (shape ``len(ts), len(xs)``)."""
    wx, nx = _space_matrix(traj.grid, xs, r)
    wt, nt = _time_matrix(traj, ts, r)
    if guard and (nx.min(initial=MIN_SPACE_POINTS) < MIN_SPACE_POINTS
                  or nt.min(initial=MIN_SNAPSHOTS) < MIN_SNAPSHOTS):
        raise ResolutionError(f"cylinders of radius {r:g} are below the resolution guard")
    return wt @ (np.abs(traj.vx) ** 3) @ wx.T / r ** 2


@dataclass(frozen=True)
class SupIScan:
    value: float
    level_max: tuple[float, ...]
    resolution_limited: bool


def sup_I_scan(traj: Trajectory, base: Cylinder, levels: int) -> SupIScan:
    """Dyadic scan: radii ``r 2^-j``, centres spaced ``r_j`` in x and ``r_j^4`` in t."""
    if levels < 1:
        raise InvalidArgumentError(f"levels must be >= 1, got {levels!r}")
    maxima = []
    limited = False
    for j in range(levels + 1):
        rj = base.r * 2.0 ** -j
        nxc = 2 ** (j + 1) - 1
        xs = base.x0 - base.r + rj * np.arange(1, nxc + 1)
        ts = base.t0 - rj ** 4 * np.arange(16 ** j)
        try:
            table = _I_table(traj, xs, ts, rj)
        except (ResolutionError, OutOfDomainError):
            if j == 0:
                raise
            limited = True
            break
        maxima.append(float(table.max()))
    return SupIScan(max(maxima), tuple(maxima), limited)


def sup_I(traj: Trajectory, base: Cylinder, levels: int) -> float:
    return sup_I_scan(traj, base, levels).value


def classify_points(traj: Trajectory, epsilon: float, R_test: float,
                    stride: int = 1) -> dict[tuple[float, float], str]:
    """Heuristic epsilon-regularity labels ``small_I`` / ``large_I`` per point-time.

    Only grid points whose cylinder ``Q_R_test`` lies inside the record are
    labelled; ``stride`` thins both the spatial and temporal lattice.
    """
    if not epsilon > 0:
        raise InvalidArgumentError("epsilon must be positive")
    grid = traj.grid
    x = grid.x[::stride]
    if not grid.periodic:
        lo, hi = grid.origin, grid.origin + grid.length
        x = x[(x - R_test >= lo - 1e-12) & (x + R_test <= hi + 1e-12)]
    t = traj.times[::stride]
    t = t[t - R_test ** 4 >= traj.t_start - _SNAP * traj.dt_store]
    if x.size == 0 or t.size == 0:
        raise OutOfDomainError(f"no point admits a cylinder of radius {R_test:g} inside the record")
    table = _I_table(traj, x, t, R_test)
    out = {}
    for j, tj in enumerate(t):
        for i, xi in enumerate(x):
            out[(float(xi), float(tj))] = "small_I" if table[j, i] <= epsilon else "large_I"
    return out


# ------------------------------------------------------- local energy balance

def _snapshot_at(traj: Trajectory, t: float) -> np.ndarray:
    pos = (t - traj.t_start) / traj.dt_store
    j = min(int(math.floor(pos + 1e-9)), traj.count - 1)
    frac = pos - j
    if abs(frac) < 1e-9 or j == traj.count - 1:
        return traj.values[j]
    return (1 - frac) * traj.values[j] + frac * traj.values[j + 1]


def _cutoff_nodes(cut: CutoffSystem, nodes: int = 24):
    """Gauss-Legendre nodes on the two ramps and the plateau of ``phi``."""
    y, w = np.polynomial.legendre.leggauss(nodes)
    p = cut.profile.plateau
    xs, ws = [], []
    for a, b in ((-1.0, -p), (-p, p), (p, 1.0)):
        lo, hi = cut.x0 + a * cut.r, cut.x0 + b * cut.r
        xs.append(0.5 * (hi - lo) * y + 0.5 * (hi + lo))
        ws.append(0.5 * (hi - lo) * w)
    return np.concatenate(xs), np.concatenate(ws)


def _at_points(arr: np.ndarray, grid: Grid, xs: np.ndarray) -> np.ndarray:
    """Interpolate rows of grid samples to arbitrary abscissae."""
    if grid.periodic:
        return _trig_eval(arr, grid, xs)
    lo, hi = grid.origin, grid.origin + grid.length
    if xs.min() < lo - 1e-12 or xs.max() > hi + 1e-12:
        raise OutOfDomainError("cutoff support leaves the clamped domain")
    return CubicSpline(grid.x, arr, axis=-1)(np.clip(xs, lo, hi))


def lei_residual(traj: Trajectory, q: Cylinder, t_eval: float | None = None,
                 profile: BumpProfile = DEFAULT_PROFILE) -> float:
    """RHS minus LHS of the cutoff-tested energy balance up to ``t_eval``.

    The test function is ``eta = chi * phi`` adapted to ``q``.  Zero (up to
    discretisation error) for smooth solutions.  The high derivatives of
    ``phi`` vary on a scale finer than typical grids, so the spatial
    integrals use Gauss nodes on each piece of ``phi`` with the field
    interpolated there.
    """
    t_eval = q.t0 if t_eval is None else t_eval
    if not (q.t_bottom < t_eval <= q.t0 + 1e-12):
        raise InvalidArgumentError(f"t_eval={t_eval!r} outside ({q.t_bottom}, {q.t0}]")
    grid = traj.grid
    cut = CutoffSystem.for_cylinder(q, profile)
    cut.phi_on_grid(grid)  # support check
    if t_eval - q.t_bottom < traj.dt_store * (MIN_SNAPSHOTS - 1) - 1e-12:
        raise ResolutionError("energy balance window holds too few snapshots")
    jt, wt = interval_weights(traj.t_start, traj.dt_store, traj.count,
                              q.t_bottom, t_eval, periodic=False)
    ts = traj.t_start + traj.dt_store * jt
    xs, wx = _cutoff_nodes(cut)
    phi = [cut.phi(xs, m) for m in range(5)]
    chi, chi_t = cut.chi(ts)[:, None], cut.chi(ts, 1)[:, None]
    v = _at_points(traj.values[jt], grid, xs)
    vx = _at_points(traj.vx[jt], grid, xs)
    vxx = _at_points(traj.vxx[jt], grid, xs)
    v2, vx2 = v * v, vx * vx
    density = (0.5 * (chi_t * phi[0] - chi * phi[4]) * v2
               + chi * (2.0 * vx2 * phi[2] - (5.0 / 3.0) * vx2 * vx * phi[1]
                        - vx2 * v * phi[2] - vxx ** 2 * phi[0]))
    bulk = float(wt @ density @ wx)
    v_end = _at_points(_snapshot_at(traj, t_eval), grid, xs)
    top = 0.5 * float(cut.chi(t_eval)) * float((v_end ** 2 * phi[0]) @ wx)
    return bulk - top


def w1inf_norm(traj: Trajectory) -> float:
    return float(max(np.abs(traj.values).max(), np.abs(traj.vx).max()))


# ------------------------------------------------------------- Caccioppoli

def caccioppoli_C(traj: Trajectory, q: Cylinder,
                  profile: BumpProfile = DEFAULT_PROFILE) -> float:
    """Smallest C in ``sup_t int vh^2 eta + int int vh_xx^2 eta <= C (R^-2 int |vh_x|^2 + R^-1 int |vh_x|^3)``."""
    s = sample_cylinder(traj, q)
    osc = oscillation(traj, q.x0, q.r, q.t0, profile)
    cut = CutoffSystem.for_cylinder(q, profile)
    phi = cut.phi(s.x)
    chi = cut.chi(s.t)
    vh = osc.values[np.ix_(s.jt, s.ix)]
    vxx = s.block(traj.vxx)
    vx = np.abs(s.block(traj.vx))
    inside = (s.t > q.t_bottom + _SNAP * traj.dt_store)
    mass = (chi[:, None] * vh ** 2 * phi) @ s.wx
    lhs = float(mass[inside].max(initial=0.0)) + s.integrate(chi[:, None] * vxx ** 2 * phi)
    rhs = s.integrate(vx ** 2) / q.r ** 2 + s.integrate(vx ** 3) / q.r
    scale = max(lhs, 1.0)
    if rhs <= 1e-15 * scale:
        if lhs <= 1e-15:
            return 0.0
        raise DegenerateError("Caccioppoli right-hand side vanishes while the left does not")
    return lhs / rhs


# ------------------------------------------------------------------ Gabushin

def _vanishes(values: np.ndarray, rel: float = 1e-8) -> bool:
    scale = float(np.max(np.abs(values)))
    return scale == 0.0 or float(np.min(np.abs(values))) <= rel * scale


def gabushin_ratio(f: Field) -> float:
    """``||f_x||_{10/3} / (||f||_2^{2/5} ||f_xx||_2^{3/5})``."""
    peak = float(np.max(np.abs(f.values)))
    if peak > 0:
        f = Field(f.grid, f.values / peak)  # degree-0 homogeneous; keeps a*f bitwise stable
    fx = derivative(f, 1)
    compact = not f.grid.periodic and f.boundary_admissible(1e-8 * max(np.abs(f.values).max(), 1e-300))
    if not compact and not (_vanishes(f.values) and _vanishes(fx.values)):
        raise PreconditionError("f and f_x must each vanish at some grid point")
    den = lp_norm(f, 2) ** 0.4 * lp_norm(derivative(f, 2), 2) ** 0.6
    if den == 0.0:
        raise DegenerateError("Gabushin denominator vanishes")
    return lp_norm(fx, GABUSHIN_EXPONENT) / den


def gabushin_reference_sine() -> float:
    """Closed form of the ratio for ``sin`` on one period."""
    norm = (2.0 * math.sqrt(math.pi) * math.gamma(13.0 / 6.0) / math.gamma(8.0 / 3.0)) ** 0.3
    return norm / math.sqrt(math.pi)


def random_admissible_field(grid: Grid, rng: np.random.Generator, modes: int = 8) -> Field:
    """Random trigonometric polynomial with ``f(0) = f_x(0) = 0``."""
    if not grid.periodic:
        raise InvalidArgumentError("admissible random fields live on periodic grids")
    kappa = 2.0 * math.pi / grid.length
    k = np.arange(1, modes + 1)
    a = rng.standard_normal(modes) / k
    b = rng.standard_normal(modes) / k
    xk = np.outer(kappa * grid.x, k)
    g = np.cos(xk) @ a + np.sin(xk) @ b
    g0 = a.sum()
    gx0 = kappa * (k * b).sum()
    return Field(grid, g - g0 - gx0 / kappa * np.sin(kappa * grid.x))


@dataclass(frozen=True)
class GabushinEstimate:
    value: float
    samples: int
    seed: int
    n: int
    modes: int

    def as_dict(self) -> dict:
        return {"value": self.value, "samples": self.samples, "seed": self.seed,
                "n": self.n, "modes": self.modes}


def estimate_gabushin_constant(samples: int, seed: int, n: int = 256,
                               modes: int = 8) -> GabushinEstimate:
    """Supremum of the ratio over seeded random admissible fields on [0, 2 pi)."""
    if samples < 1:
        raise InvalidArgumentError("samples must be >= 1")
    grid = Grid("periodic", 2.0 * math.pi, n)
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(samples):
        best = max(best, gabushin_ratio(random_admissible_field(grid, rng, modes)))
    return GabushinEstimate(best, samples, seed, n, modes)


# ------------------------------------------------------------ reverse Hoelder

def reverse_holder_ratio(traj: Trajectory, q: Cylinder) -> float:
    """``(mean_{Q_R/2} |vh_x|^{10/3})^{3/10} / (mean_{Q_R} |vh_x|^3)^{1/3}``.

    The oscillation at scale R differs from v by a function of t, so only
    ``v_x`` enters.
    """
    inner_q = q.shrink(0.5)
    s_in = sample_cylinder(traj, inner_q)
    s_out = sample_cylinder(traj, q)
    num = (cylinder_integral(traj, inner_q, "vhat_x_p", GABUSHIN_EXPONENT)
           / s_in.weight_total) ** 0.3
    den = (cylinder_integral(traj, q, "vhat_x_p", 3.0) / s_out.weight_total) ** (1.0 / 3.0)
    if den == 0.0:
        raise DegenerateError("reverse Hoelder denominator vanishes")
    return num / den


# ------------------------------------------------------------- Hoelder norm

MAX_HOLDER_POINTS = 1414  # about 10**6 unordered pairs


def holder_seminorm(traj: Trajectory, q: Cylinder, gamma: float) -> float:
    """Largest ``|v_x(z) - v_x(z')| / d(z, z')^gamma`` over points of ``q``.

    ``d`` is ``|x - x'| + |t - t'|^(1/4)``; pairs closer than two grid
    spacings are skipped, and large point sets are thinned by an evenly
    spaced deterministic selection.
    """
    if not 0 < gamma <= 1:
        raise InvalidArgumentError(f"gamma must lie in (0, 1], got {gamma!r}")
    s = sample_cylinder(traj, q)
    h = traj.grid.spacing
    xmask = (s.x > q.x0 - q.r + _SNAP * h) & (s.x < q.x0 + q.r - _SNAP * h)
    tol = _SNAP * traj.dt_store
    tmask = (s.t > q.t_bottom + tol) & (s.t <= q.t0 + tol)
    vals = traj.vx[np.ix_(s.jt[tmask], s.ix[xmask])]
    tt, xx = np.meshgrid(s.t[tmask], s.x[xmask], indexing="ij")
    pts = np.column_stack([xx.ravel(), tt.ravel(), vals.ravel()])
    if len(pts) > MAX_HOLDER_POINTS:
        pick = np.unique(np.linspace(0, len(pts) - 1, MAX_HOLDER_POINTS).round().astype(int))
        pts = pts[pick]
    best = 0.0
    for i in range(len(pts) - 1):
        rest = pts[i + 1:]
        d = np.abs(rest[:, 0] - pts[i, 0]) + np.abs(rest[:, 1] - pts[i, 1]) ** 0.25
        keep = d >= 2.0 * h
        if np.any(keep):
            quot = np.abs(rest[keep, 2] - pts[i, 2]) / d[keep] ** gamma
            best = max(best, float(quot.max()))
    return best


# ------------------------------------------------------------ decay of Y

@dataclass(frozen=True)
class DecaySeries:
    theta: float
    gamma_target: float
    values: tuple[float, ...]
    fitted_rate: float
    K_requested: int
    K_effective: int
    passed: bool
    first_violation: int | None

    def as_dict(self) -> dict:
        return {"theta": self.theta, "gamma_target": self.gamma_target,
                "values": list(self.values), "fitted_rate": _finite_or_none(self.fitted_rate),
                "K_requested": self.K_requested, "K_effective": self.K_effective,
                "passed": self.passed, "first_violation": self.first_violation}


def fit_decay_rate(values, theta: float) -> float:
    """Least-squares slope of ``log Y_k`` against ``k log theta`` (nan if < 2 positive values)."""
    vals = np.asarray(values, dtype=float)
    k = np.arange(len(vals))
    pos = vals > 0
    if pos.sum() < 2:
        return math.nan
    slope, _ = np.polyfit(k[pos] * math.log(theta), np.log(vals[pos]), 1)
    return float(slope)


def decay_experiment(traj: Trajectory, center: tuple[float, float], theta: float,
                     K: int, gamma_target: float, sampler=None) -> DecaySeries:
    """Y on the nested cylinders ``Q_{theta^k}(center)``, ``k = 0..K``.

    ``sampler(q)`` may supply a finer trajectory for cylinders that ``traj``
    cannot resolve; the series stops at the first cylinder neither resolves.
    """
    if not 0 < theta < 0.25:
        raise InvalidArgumentError(f"theta must lie in (0, 1/4), got {theta!r}")
    if K < 2:
        raise InvalidArgumentError(f"K must be >= 2, got {K!r}")
    x0, t0 = center
    values = []
    for k in range(K + 1):
        q = Cylinder(x0, t0, theta ** k)
        src = traj
        if not resolvable(traj, q):
            if k == 0:
                sample_cylinder(traj, q)  # raise the informative error
            src = sampler(q) if sampler is not None else None
            if src is None or not resolvable(src, q):
                break
        values.append(gradient_excess(src, q, 3.0))
    k_eff = len(values) - 1
    if k_eff < 2:
        raise ResolutionError(f"only {k_eff + 1} nested cylinders are resolvable; need 3")
    factor = theta ** gamma_target
    first = next((k for k in range(1, len(values)) if values[k] > factor * values[k - 1]), None)
    return DecaySeries(theta, gamma_target, tuple(values), fit_decay_rate(values, theta),
                       K, k_eff, first is None, first)


# ------------------------------------------------------------------- report

def _finite_or_none(x):
    return None if x is None or not math.isfinite(x) else x


REPORT_DIAGNOSTICS = ("I", "Y", "sup_I", "lei", "caccioppoli", "reverse_holder", "holder")


@dataclass(frozen=True)
class RegularityReport:
    """Diagnostics on one cylinder; entries not requested (or degenerate) are None."""
    cylinder: Cylinder
    I_value: float
    Y_value: float | None
    sup_I: float | None
    lei_residual: float | None
    caccioppoli_C: float | None
    reverse_holder_ratio: float | None
    holder_seminorm: float | None
    gamma: float
    flags: tuple[str, ...]
    decay: DecaySeries | None = None
    config: dict | None = field(default=None)

    def as_dict(self) -> dict:
        f = _finite_or_none
        out = {"cylinder": self.cylinder.as_dict(), "I": f(self.I_value), "Y": f(self.Y_value),
               "sup_I": f(self.sup_I), "lei_residual": f(self.lei_residual),
               "caccioppoli_C": f(self.caccioppoli_C),
               "reverse_holder": f(self.reverse_holder_ratio),
               "holder": {"gamma": self.gamma, "seminorm": f(self.holder_seminorm)},
               "flags": sorted(self.flags)}
        if self.decay is not None:
            out["decay"] = self.decay.as_dict()
        if self.config is not None:
            out["config"] = self.config
        return out

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2) + "\n"


def build_report(traj: Trajectory, q: Cylinder, *, epsilon: float = 0.1,
                 gamma: float = 0.5, levels: int = 2, include=REPORT_DIAGNOSTICS,
                 energy_residual: float | None = None, energy_tol: float | None = None,
                 decay: DecaySeries | None = None, config: dict | None = None) -> RegularityReport:
    """Evaluate the requested diagnostics on ``q``.

    I is always computed since it drives the ``small_I`` flag.  Degenerate
    ratios (constant data) and cylinders too short for the energy balance
    are recorded as None.  ``post_smooth`` marks an energy residual above
    ``energy_tol``.
    """
    include = set(include)
    unknown = include - set(REPORT_DIAGNOSTICS)
    if unknown:
        raise InvalidArgumentError(f"unknown diagnostics {sorted(unknown)}")

    def attempt(name, func, *errors):
        if name not in include:
            return None
        try:
            return func()
        except errors:
            return None

    I_value = scale_invariant_I(traj, q)
    scan = sup_I_scan(traj, q, levels) if "sup_I" in include else None
    flags = set()
    if I_value <= epsilon:
        flags.add("small_I")
    if scan is not None and scan.resolution_limited:
        flags.add("resolution_limited")
    if energy_residual is not None and energy_tol is not None and abs(energy_residual) > energy_tol:
        flags.add("post_smooth")
    return RegularityReport(
        cylinder=q, I_value=I_value,
        Y_value=attempt("Y", lambda: gradient_excess(traj, q, 3.0)),
        sup_I=None if scan is None else scan.value,
        lei_residual=attempt("lei", lambda: lei_residual(traj, q), ResolutionError),
        caccioppoli_C=attempt("caccioppoli", lambda: caccioppoli_C(traj, q), DegenerateError),
        reverse_holder_ratio=attempt("reverse_holder", lambda: reverse_holder_ratio(traj, q),
                                     DegenerateError, ResolutionError),
        holder_seminorm=attempt("holder", lambda: holder_seminorm(traj, q, gamma)),
        gamma=gamma, flags=tuple(sorted(flags)), decay=decay, config=config)
