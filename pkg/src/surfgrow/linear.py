"""Exact solutions of ``u_t + u_xxxx + beta u_xxx = 0`` and a Campanato probe.

Each Fourier mode evolves by ``exp(-(k^4 - i beta k^3) t)``, so sampling at
any time is exact up to roundoff.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .cylinder import Cylinder, Trajectory, cylinder_integral, gradient_excess
from .errors import InvalidArgumentError, OutOfDomainError
from .field import Field, Grid, SpectralWorkspace

PROBE_COARSE_SNAPSHOTS = 33
PROBE_FINE_POINTS = 32
PROBE_FINE_SNAPSHOTS = 17


class LinearProblem:
    """Drift ``beta`` and periodic initial data projected below the dealias cut."""

    def __init__(self, beta: float, u0: Field):
        if not u0.grid.periodic:
            raise InvalidArgumentError("the linear problem is posed on periodic grids")
        if not math.isfinite(beta):
            raise InvalidArgumentError(f"beta must be finite, got {beta!r}")
        self.beta = float(beta)
        self.grid = u0.grid
        self._ws = SpectralWorkspace(self.grid)
        self.coeffs = self._ws.dealias(self._ws.forward(u0.values))
        self.coeffs.setflags(write=False)
        self.u0 = Field(self.grid, self._ws.inverse(self.coeffs))

    @property
    def wavenumbers(self) -> np.ndarray:
        return self._ws.wavenumbers

    def symbol(self) -> np.ndarray:
        k = self.wavenumbers
        return -(k ** 4) + 1j * self.beta * k ** 3

    def coeffs_at(self, times) -> np.ndarray:
        """Mode coefficients at each time in ``times`` (shape ``len(times), n//2+1``)."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        if np.any(times < 0):
            raise InvalidArgumentError("linear evolution runs forward in time only")
        return self.coeffs * np.exp(np.outer(times, self.symbol()))

    def is_zero(self) -> bool:
        return not np.any(self.coeffs)


def linear_evolve(prob: LinearProblem, t: float) -> Field:
    if t == 0:
        return prob.u0
    return Field(prob.grid, prob._ws.inverse(prob.coeffs_at([t])[0]))


def _pad(coeffs: np.ndarray, n: int, n_fine: int) -> np.ndarray:
    out = np.zeros(coeffs.shape[:-1] + (n_fine // 2 + 1,), dtype=complex)
    out[..., :coeffs.shape[-1]] = coeffs
    return out * (n_fine / n)


def linear_trajectory(prob: LinearProblem, t_start: float, dt_store: float, count: int,
                      n: int | None = None) -> Trajectory:
    """Exact samples on a grid of ``n`` points (default: the problem grid).

    The data are band-limited below the coarse dealias cut, so
    zero-padding onto a finer grid is exact.
    """
    n = n or prob.grid.n
    if n < prob.grid.n:
        raise InvalidArgumentError("trajectory grid must not be coarser than the problem grid")
    grid = Grid(prob.grid.kind, prob.grid.length, n)
    coeffs = prob.coeffs_at(t_start + dt_store * np.arange(count))
    values = np.fft.irfft(_pad(coeffs, prob.grid.n, n), n=n, axis=-1)
    return Trajectory(grid, t_start, dt_store, values)


def fine_points(length: float, r: float, n_min: int, points: int) -> int:
    """Smallest power-of-two multiple of ``n_min`` putting ``points`` samples across ``2r``."""
    n = n_min
    while 2.0 * r * n / length < points:
        n *= 2
    return n


def linear_sampler(prob: LinearProblem, points: int = 16, snapshots: int = 16):
    """Callable ``q -> Trajectory`` resolving ``q`` with exact samples."""
    def sample(q: Cylinder) -> Trajectory:
        if q.t_bottom < 0:
            raise OutOfDomainError("cylinder reaches before t = 0")
        n = fine_points(prob.grid.length, q.r, prob.grid.n, points + 1)
        return linear_trajectory(prob, q.t_bottom, q.duration / snapshots, snapshots + 1, n)
    return sample


@dataclass(frozen=True)
class CampanatoProbeResult:
    theta: float
    p: float
    beta: float
    excess: float
    bound_ratio: float
    raw_ratio: float
    gradient_norm: float
    x_c: float
    t_c: float
    n_fine: int

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def campanato_probe(prob: LinearProblem, theta: float, p: float = 3.0,
                    x_c: float | None = None, t_c: float = 1.0) -> CampanatoProbeResult:
    """Excess of ``u_x`` on ``Q_theta(x_c, t_c)`` against ``theta ||u_x||_{L2(Q_1)}``.

    ``bound_ratio`` divides by ``(1 + |beta|)`` as well; ``raw_ratio`` does
    not.  For a zero gradient norm both ratios are nan.
    """
    if not 0 < theta < 0.5:
        raise InvalidArgumentError(f"theta must lie in (0, 1/2), got {theta!r}")
    if not p >= 1:
        raise InvalidArgumentError(f"p must be >= 1, got {p!r}")
    if t_c < 1:
        raise InvalidArgumentError(f"probe cylinders need t_c >= 1, got {t_c!r}")
    x_c = 0.5 * prob.grid.length if x_c is None else x_c
    q1 = Cylinder(x_c, t_c, 1.0)
    qt = Cylinder(x_c, t_c, theta)
    coarse = linear_trajectory(prob, t_c - 1.0, 1.0 / (PROBE_COARSE_SNAPSHOTS - 1),
                               PROBE_COARSE_SNAPSHOTS,
                               fine_points(prob.grid.length, 1.0, prob.grid.n, PROBE_FINE_POINTS))
    norm = math.sqrt(cylinder_integral(coarse, q1, "vx_p", 2.0))
    n_fine = fine_points(prob.grid.length, theta, prob.grid.n, PROBE_FINE_POINTS)
    fine = linear_trajectory(prob, qt.t_bottom, qt.duration / (PROBE_FINE_SNAPSHOTS - 1),
                             PROBE_FINE_SNAPSHOTS, n_fine)
    excess = gradient_excess(fine, qt, p)
    if norm > 0:
        raw = excess / (theta * norm)
        bound = raw / (1.0 + abs(prob.beta))
    else:
        raw = bound = math.nan
    return CampanatoProbeResult(theta, p, prob.beta, excess, bound, raw, norm, x_c, t_c, n_fine)


# ---------------------------------------------------- empirical constant

@dataclass(frozen=True)
class LinearConstantEstimate:
    value: float
    used: int
    skipped: int
    betas: tuple[float, ...]
    samples: int
    seed: int
    n: int

    def as_dict(self) -> dict:
        out = dict(self.__dict__)
        out["betas"] = list(self.betas)
        out["value"] = None if math.isnan(self.value) else self.value
        return out


def random_lowmode_data(grid: Grid, rng: np.random.Generator, modes: int = 4) -> np.ndarray:
    kappa = 2.0 * math.pi / grid.length
    k = np.arange(1, modes + 1)
    a = rng.standard_normal(modes)
    b = rng.standard_normal(modes)
    xk = np.outer(kappa * grid.x, k)
    return np.cos(xk) @ a + np.sin(xk) @ b


def _probe_chunk(args) -> tuple[float, int, int]:
    grid, betas, chunk = args
    best, used, skipped = -math.inf, 0, 0
    for values in chunk:
        for beta in betas:
            prob = LinearProblem(beta, Field(grid, values))
            res = campanato_probe(prob, 0.125, 3.0, x_c=0.5 * grid.length)
            if math.isnan(res.bound_ratio):
                skipped += 1
                continue
            used += 1
            best = max(best, res.bound_ratio)
    return best, used, skipped


def estimate_linear_constant(betas, samples: int, seed: int, workers: int | None = None,
                             n: int = 128, data=None) -> LinearConstantEstimate:
    """Largest ``bound_ratio`` at ``theta = 1/8``, ``p = 3`` over seeded random data.

    ``data`` (a list of arrays) replaces the random draws.  Samples are drawn
    up front so the result does not depend on ``workers``.
    """
    betas = tuple(float(b) for b in betas)
    if samples < 1:
        raise InvalidArgumentError("samples must be >= 1")
    grid = Grid("periodic", 2.0 * math.pi, n)
    if data is None:
        rng = np.random.default_rng(seed)
        data = [random_lowmode_data(grid, rng) for _ in range(samples)]
    data = list(data)[:samples]
    workers = workers or int(os.environ.get("SGM_JOBS", "1"))
    chunks = [data[i::workers] for i in range(workers)]
    tasks = [(grid, betas, c) for c in chunks if c]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_probe_chunk, tasks))
    else:
        parts = [_probe_chunk(t) for t in tasks]
    best = max(p[0] for p in parts)
    used = sum(p[1] for p in parts)
    skipped = sum(p[2] for p in parts)
    return LinearConstantEstimate(best if used else math.nan, used, skipped,
                                  betas, samples, seed, n)
