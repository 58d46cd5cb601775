import math

import numpy as np
import pytest

from surfgrow.cylinder import static_trajectory
from surfgrow.field import Field, Grid
from surfgrow.solver import SolverConfig, evolve

TWO_PI = 2.0 * math.pi


@pytest.fixture(scope="session")
def periodic128():
    return Grid("periodic", TWO_PI, 128)


@pytest.fixture(scope="session")
def clamped257():
    return Grid("clamped", 4.0, 257)


@pytest.fixture(scope="session")
def linear_fixture(clamped257):
    """Static v(x, t) = x covering Q_1(0, 0)."""
    return static_trajectory(clamped257, lambda x, t: x, -1.0, 1.0 / 256, 257)


@pytest.fixture(scope="session")
def half_square_fixture(clamped257):
    """Static v(x, t) = x^2 / 2 covering Q_1(0, 0)."""
    return static_trajectory(clamped257, lambda x, t: 0.5 * x * x, -1.0, 1.0 / 256, 257)


@pytest.fixture(scope="session")
def small_run():
    """Unforced run from 0.1 sin x, n = 256, dt = 1e-4 up to t = 0.2."""
    grid = Grid("periodic", TWO_PI, 256)
    cfg = SolverConfig(dt=1e-4, t_end=0.2)
    traj, ledger = evolve(Field.from_function(grid, lambda x: 0.1 * np.sin(x)), cfg)
    return traj, ledger, cfg
