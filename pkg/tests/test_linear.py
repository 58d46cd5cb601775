import math

import numpy as np
import pytest

from surfgrow.errors import InvalidArgumentError, OutOfDomainError
from surfgrow.field import Field, Grid, lp_norm
from surfgrow.linear import (LinearProblem, campanato_probe, estimate_linear_constant,
                             linear_evolve, linear_sampler, linear_trajectory)
from surfgrow.cylinder import Cylinder

TWO_PI = 2.0 * math.pi


@pytest.fixture
def grid():
    return Grid("periodic", TWO_PI, 128)


def test_identity_at_zero(grid):
    prob = LinearProblem(2.0, Field.from_function(grid, np.sin))
    assert np.array_equal(linear_evolve(prob, 0.0).values, prob.u0.values)


def test_drifting_sine_value(grid):
    prob = LinearProblem(2.0, Field.from_function(grid, np.sin))
    u = linear_evolve(prob, 1.0)
    assert u.values[0] == pytest.approx(math.exp(-1) * math.sin(2), abs=1e-12)
    assert np.max(np.abs(u.values - math.exp(-1) * np.sin(grid.x + 2))) < 1e-12


def test_mode_magnitudes_independent_of_beta(grid):
    rng = np.random.default_rng(3)
    u0 = Field(grid, rng.standard_normal(128))
    k = np.fft.rfftfreq(128, 1 / 128)
    for beta in (0.0, 1.0, 5.0):
        prob = LinearProblem(beta, u0)
        c = prob.coeffs_at([0.3])[0]
        assert np.allclose(np.abs(c), np.exp(-k ** 4 * 0.3) * np.abs(prob.coeffs), atol=1e-13, rtol=0)


def test_semigroup(grid):
    rng = np.random.default_rng(1)
    prob = LinearProblem(1.5, Field(grid, rng.standard_normal(128)))
    mid = linear_evolve(prob, 0.2)
    again = linear_evolve(LinearProblem(1.5, mid), 0.3)
    assert np.max(np.abs(again.values - linear_evolve(prob, 0.5).values)) < 1e-12


def test_beta_acts_as_shift(grid):
    for m in (1, 2, 3):
        u0 = Field.from_function(grid, lambda x: np.cos(m * x))
        t = 0.05
        base = math.exp(-m ** 4 * t)
        shifted = linear_evolve(LinearProblem(3.0, u0), t).values
        assert np.max(np.abs(shifted - base * np.cos(m * grid.x + 3.0 * m ** 3 * t))) < 1e-10


def test_l2_contraction(grid):
    prob = LinearProblem(2.0, Field.from_function(grid, lambda x: np.sin(x) + np.cos(3 * x)))
    norms = [lp_norm(linear_evolve(prob, t), 2) for t in (0, 0.01, 0.1, 1.0)]
    assert all(a > b for a, b in zip(norms, norms[1:]))


def test_negative_time_rejected(grid):
    with pytest.raises(InvalidArgumentError):
        LinearProblem(0.0, Field.from_function(grid, np.sin)).coeffs_at([-1.0])


def test_trajectory_zero_padding_is_exact(grid):
    prob = LinearProblem(1.0, Field.from_function(grid, np.sin))
    traj = linear_trajectory(prob, 0.5, 0.25, 3, n=512)
    x = Grid("periodic", TWO_PI, 512).x
    for j, t in enumerate(traj.times):
        assert np.max(np.abs(traj.values[j] - math.exp(-t) * np.sin(x + t))) < 1e-13


def test_sampler_resolves_small_cylinders(grid):
    sample = linear_sampler(LinearProblem(0.0, Field.from_function(grid, np.sin)))
    traj = sample(Cylinder(1.0, 1.0, 0.05))
    assert traj.grid.n * 0.1 / TWO_PI >= 16
    with pytest.raises(OutOfDomainError):
        sample(Cylinder(1.0, 0.0, 0.5))


def test_probe_zero_data(grid):
    res = campanato_probe(LinearProblem(0.0, Field(grid, np.zeros(128))), 0.125)
    assert res.excess == 0.0
    assert math.isnan(res.bound_ratio)


def test_probe_linear_slope_in_theta(grid):
    prob = LinearProblem(0.0, Field.from_function(grid, np.sin))
    for theta in (0.25, 0.125):
        # anchored where u_xx is extremal; at x = pi the leading term vanishes
        ratio = (campanato_probe(prob, theta, x_c=math.pi / 2).excess
                 / campanato_probe(prob, theta / 2, x_c=math.pi / 2).excess)
        assert 1.8 <= ratio <= 2.2


def test_probe_excess_nondecreasing(grid):
    prob = LinearProblem(1.0, Field.from_function(grid, lambda x: np.sin(x) + 0.5 * np.cos(2 * x)))
    ex = [campanato_probe(prob, th).excess for th in (0.05, 0.1, 0.2, 0.4)]
    assert all(b >= a * (1 - 1e-9) for a, b in zip(ex, ex[1:]))


@pytest.mark.parametrize("theta", [0.0, 0.5, -0.1, 0.7])
def test_probe_theta_validation(grid, theta):
    with pytest.raises(InvalidArgumentError):
        campanato_probe(LinearProblem(0.0, Field.from_function(grid, np.sin)), theta)


def test_probe_argument_validation(grid):
    prob = LinearProblem(0.0, Field.from_function(grid, np.sin))
    with pytest.raises(InvalidArgumentError):
        campanato_probe(prob, 0.1, p=0.5)
    with pytest.raises(InvalidArgumentError):
        campanato_probe(prob, 0.1, t_c=0.5)


def test_constant_is_deterministic():
    a = estimate_linear_constant([0.0, 1.0], samples=6, seed=5)
    b = estimate_linear_constant([0.0, 1.0], samples=6, seed=5)
    assert a == b and math.isfinite(a.value) and a.used == 12


def test_constant_independent_of_worker_count():
    a = estimate_linear_constant([0.0, 2.0], samples=4, seed=9, workers=1)
    b = estimate_linear_constant([0.0, 2.0], samples=4, seed=9, workers=2)
    assert a.value == b.value


def test_zero_sample_is_skipped():
    grid = Grid("periodic", TWO_PI, 128)
    est = estimate_linear_constant([0.0], samples=1, seed=0, data=[np.zeros(128)])
    assert est.used == 0 and est.skipped == 1 and math.isnan(est.value)
    mixed = estimate_linear_constant([0.0], samples=2, seed=0, data=[np.zeros(128), np.sin(grid.x)])
    assert mixed.used == 1 and mixed.skipped == 1 and math.isfinite(mixed.value)


def test_bound_holds_with_estimated_constant():
    est = estimate_linear_constant([0.0, 1.0, 4.0], samples=8, seed=11)
    grid = Grid("periodic", TWO_PI, 128)
    rng = np.random.default_rng(11)
    from surfgrow.linear import random_lowmode_data
    for _ in range(8):
        values = random_lowmode_data(grid, rng)
        for beta in (0.0, 1.0, 4.0):
            res = campanato_probe(LinearProblem(beta, Field(grid, values)), 0.125, x_c=math.pi)
            assert res.excess <= est.value * (1 + beta) * 0.125 * res.gradient_norm * (1 + 1e-12)
