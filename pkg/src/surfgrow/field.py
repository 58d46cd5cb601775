"""Grids, fields, differentiation, quadrature and Lebesgue norms.

Periodic grids cover ``[0, L)`` and use Fourier differentiation with the
rectangle rule.  Clamped grids cover ``[-L/2, L/2]`` including both
endpoints and use second-order finite differences with the trapezoid rule.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import sparse

from .errors import InvalidArgumentError

PERIODIC = "periodic"
CLAMPED = "clamped"


@dataclass(frozen=True)
class Grid:
    kind: str
    length: float
    n: int

    def __post_init__(self):
        if self.kind not in (PERIODIC, CLAMPED):
            raise InvalidArgumentError(f"unknown grid kind {self.kind!r}")
        if not (self.length > 0 and math.isfinite(self.length)):
            raise InvalidArgumentError(f"grid length must be positive, got {self.length!r}")
        if self.n < 8:
            raise InvalidArgumentError(f"grid needs n >= 8 points, got {self.n}")
        if self.kind == PERIODIC and self.n % 2:
            raise InvalidArgumentError(f"periodic grids need an even n, got {self.n}")

    @property
    def periodic(self) -> bool:
        return self.kind == PERIODIC

    @property
    def spacing(self) -> float:
        if self.periodic:
            return self.length / self.n
        return self.length / (self.n - 1)

    @property
    def origin(self) -> float:
        return 0.0 if self.periodic else -0.5 * self.length

    @property
    def x(self) -> np.ndarray:
        return self.origin + self.spacing * np.arange(self.n)

    @property
    def weights(self) -> np.ndarray:
        """Quadrature weights: rectangle (periodic) or trapezoid (clamped)."""
        w = np.full(self.n, self.spacing)
        if not self.periodic:
            w[0] = w[-1] = 0.5 * self.spacing
        return w

    def scaled(self, factor: float) -> "Grid":
        """Same point count on a domain ``factor`` times as long."""
        return Grid(self.kind, self.length * factor, self.n)


@dataclass(frozen=True)
class Field:
    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.grid.n,):
            raise InvalidArgumentError(
                f"field needs {self.grid.n} values, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise InvalidArgumentError("field values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, grid: Grid, func) -> "Field":
        return cls(grid, func(grid.x))

    def boundary_admissible(self, tol: float = 0.0) -> bool:
        if self.grid.periodic:
            return True
        return abs(self.values[0]) <= tol and abs(self.values[-1]) <= tol

    def __add__(self, other):
        if isinstance(other, Field):
            _same_grid(self, other)
            return Field(self.grid, self.values + other.values)
        return Field(self.grid, self.values + other)

    def __sub__(self, other):
        if isinstance(other, Field):
            _same_grid(self, other)
            return Field(self.grid, self.values - other.values)
        return Field(self.grid, self.values - other)

    def __mul__(self, scalar):
        return Field(self.grid, self.values * scalar)

    __rmul__ = __mul__


class SpectralWorkspace:
    """Real-to-complex transform helpers for one periodic grid.

    Holds the wavenumbers ``k_j = 2*pi*j/L`` for ``j = 0..n/2`` and the
    two-thirds dealiasing cut.  Intended for use by one thread at a time.
    """

    def __init__(self, grid: Grid):
        if not grid.periodic:
            raise InvalidArgumentError("spectral workspace needs a periodic grid")
        self.grid = grid
        self.n = grid.n
        self.wavenumbers = 2.0 * np.pi * np.arange(self.n // 2 + 1) / grid.length
        self.dealias_cut = self.n // 3
        self.mask = np.arange(self.n // 2 + 1) <= self.dealias_cut

    def forward(self, values: np.ndarray) -> np.ndarray:
        return np.fft.rfft(values, axis=-1)

    def inverse(self, coeffs: np.ndarray) -> np.ndarray:
        return np.fft.irfft(coeffs, n=self.n, axis=-1)

    def multiplier(self, order: int) -> np.ndarray:
        mult = (1j * self.wavenumbers) ** order
        if order % 2:
            mult[-1] = 0.0  # odd derivatives of the Nyquist mode are not real
        return mult

    def dealias(self, coeffs: np.ndarray) -> np.ndarray:
        return coeffs * self.mask

    def mode_energy(self, coeffs: np.ndarray) -> np.ndarray:
        """Squared L2 norm (rectangle rule) from rfft coefficients, via Parseval."""
        c2 = np.abs(coeffs) ** 2
        c2[..., 1:-1] *= 2.0
        return c2.sum(axis=-1) * self.grid.length / self.n ** 2

    def mode_inner(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        prod = (a * np.conj(b)).real
        prod[..., 1:-1] *= 2.0
        return prod.sum(axis=-1) * self.grid.length / self.n ** 2


def fd_weights(offsets, order: int) -> np.ndarray:
    """Finite-difference weights on integer ``offsets`` for unit spacing."""
    offsets = np.asarray(offsets, dtype=float)
    m = len(offsets)
    vander = np.vander(offsets, m, increasing=True).T
    rhs = np.zeros(m)
    rhs[order] = math.factorial(order)
    return np.linalg.solve(vander, rhs)


@lru_cache(maxsize=64)
def _fd_matrix(n: int, order: int) -> sparse.csr_matrix:
    half = 1 if order <= 2 else 2
    npts_side = order + 2
    rows, cols, vals = [], [], []
    for i in range(n):
        if i - half >= 0 and i + half <= n - 1:
            idx = np.arange(i - half, i + half + 1)
        elif i - half < 0:
            idx = np.arange(0, npts_side)
        else:
            idx = np.arange(n - npts_side, n)
        w = fd_weights(idx - i, order)
        rows.extend([i] * len(idx))
        cols.extend(idx)
        vals.extend(w)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))


def diff_array(values: np.ndarray, grid: Grid, order: int,
               workspace: SpectralWorkspace | None = None) -> np.ndarray:
    """Differentiate samples along the last axis (any leading shape)."""
    if order not in (1, 2, 3, 4):
        raise InvalidArgumentError(f"derivative order must be 1..4, got {order!r}")
    values = np.asarray(values, dtype=float)
    if grid.periodic:
        ws = workspace or SpectralWorkspace(grid)
        return ws.inverse(ws.forward(values) * ws.multiplier(order))
    mat = _fd_matrix(grid.n, order)
    flat = values.reshape(-1, grid.n)
    out = (mat @ flat.T).T / grid.spacing ** order
    return out.reshape(values.shape)


def derivative(f: Field, order: int) -> Field:
    return Field(f.grid, diff_array(f.values, f.grid, order))


def lp_norm(f: Field, p: float) -> float:
    if p == math.inf:
        return float(np.max(np.abs(f.values)))
    if not p >= 1:
        raise InvalidArgumentError(f"lp_norm needs p >= 1 or inf, got {p!r}")
    total = float(np.dot(np.abs(f.values) ** p, f.grid.weights))
    return total ** (1.0 / p)


def inner(f: Field, g: Field) -> float:
    _same_grid(f, g)
    return float(np.dot(f.values * g.values, f.grid.weights))


def _same_grid(f: Field, g: Field) -> None:
    if f.grid != g.grid:
        raise InvalidArgumentError("fields live on different grids")
