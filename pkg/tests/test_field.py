import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from surfgrow.errors import InvalidArgumentError
from surfgrow.field import (Field, Grid, SpectralWorkspace, derivative, diff_array,
                            fd_weights, inner, lp_norm)

TWO_PI = 2.0 * math.pi


def test_grid_validation():
    with pytest.raises(InvalidArgumentError):
        Grid("periodic", TWO_PI, 7)
    with pytest.raises(InvalidArgumentError):
        Grid("periodic", TWO_PI, 129)
    with pytest.raises(InvalidArgumentError):
        Grid("spherical", 1.0, 64)
    with pytest.raises(InvalidArgumentError):
        Grid("clamped", -1.0, 64)


def test_grid_layout():
    g = Grid("periodic", TWO_PI, 64)
    assert g.x[0] == 0.0 and np.isclose(g.x[-1] + g.spacing, TWO_PI)
    c = Grid("clamped", 4.0, 257)
    assert c.x[0] == -2.0 and np.isclose(c.x[-1], 2.0)
    assert np.isclose(c.weights.sum(), 4.0)
    assert np.isclose(g.weights.sum(), TWO_PI)


def test_field_is_read_only_and_finite(periodic128):
    f = Field.from_function(periodic128, np.sin)
    with pytest.raises(ValueError):
        f.values[0] = 1.0
    bad = np.zeros(128)
    bad[3] = np.nan
    with pytest.raises(InvalidArgumentError):
        Field(periodic128, bad)
    with pytest.raises(InvalidArgumentError):
        Field(periodic128, np.zeros(64))


def test_spectral_derivatives_of_sine(periodic128):
    f = Field.from_function(periodic128, np.sin)
    x = periodic128.x
    expected = [np.cos(x), -np.sin(x), -np.cos(x), np.sin(x)]
    for order, exp in enumerate(expected, 1):
        # roundoff grows like eps * k_max^order
        tol = 1e-14 * (periodic128.n / 2) ** order
        assert np.max(np.abs(derivative(f, order).values - exp)) < tol


def test_nyquist_mode_has_no_odd_derivative():
    g = Grid("periodic", TWO_PI, 16)
    f = Field(g, np.cos(8 * g.x))
    assert np.max(np.abs(derivative(f, 1).values)) < 1e-12


def test_clamped_fd_exact_on_low_polynomials(clamped257):
    x = clamped257.x
    f = Field(clamped257, x ** 3 - 2 * x)
    # second-order stencils differentiate cubics exactly up to order 2 in the interior
    d1 = derivative(f, 1).values
    assert np.max(np.abs(d1[1:-1] - (3 * x[1:-1] ** 2 - 2))) < 1e-3
    d2 = derivative(Field(clamped257, x ** 2), 2).values
    assert np.max(np.abs(d2 - 2.0)) < 1e-9


def test_clamped_fd_convergence_order():
    errs = []
    for n in (129, 257):
        g = Grid("clamped", 2.0, n)
        f = Field(g, np.sin(g.x))
        errs.append(np.max(np.abs(derivative(f, 4).values - np.sin(g.x))))
    assert errs[0] / errs[1] > 3.0


def test_fd_weights_centred_second_difference():
    assert np.allclose(fd_weights([-1, 0, 1], 2), [1.0, -2.0, 1.0])


def test_diff_array_rejects_order():
    g = Grid("periodic", TWO_PI, 16)
    with pytest.raises(InvalidArgumentError):
        diff_array(np.zeros(16), g, 5)


def test_lp_norm_against_quadrature():
    g = Grid("periodic", TWO_PI, 256)
    p = 10.0 / 3.0
    ref = quad(lambda x: abs(math.cos(x)) ** p, 0.0, TWO_PI, limit=200)[0] ** (1 / p)
    assert abs(lp_norm(Field(g, np.cos(g.x)), p) - ref) < 1e-9
    assert lp_norm(Field(g, np.cos(g.x)), math.inf) == pytest.approx(1.0)
    with pytest.raises(InvalidArgumentError):
        lp_norm(Field(g, np.cos(g.x)), 0.5)


def test_inner_rejects_grid_mismatch():
    a = Field.from_function(Grid("periodic", TWO_PI, 16), np.sin)
    b = Field.from_function(Grid("periodic", TWO_PI, 32), np.sin)
    with pytest.raises(InvalidArgumentError):
        inner(a, b)


def test_parseval_mode_energy(periodic128):
    ws = SpectralWorkspace(periodic128)
    v = np.sin(periodic128.x) + 0.25 * np.cos(7 * periodic128.x) + 0.1
    f = Field(periodic128, v)
    assert ws.mode_energy(ws.forward(v)) == pytest.approx(lp_norm(f, 2) ** 2, rel=1e-13)


coeffs = st.lists(st.floats(-2, 2, allow_nan=False), min_size=3, max_size=3)


@settings(max_examples=40, deadline=None)
@given(coeffs, st.floats(0.1, 10.0), st.sampled_from([1.0, 2.0, 3.0, 10.0 / 3.0]))
def test_lp_norm_homogeneous(c, scale, p):
    g = Grid("periodic", TWO_PI, 64)
    f = Field(g, c[0] * np.sin(g.x) + c[1] * np.cos(2 * g.x) + c[2])
    assert lp_norm(f * scale, p) == pytest.approx(scale * lp_norm(f, p), rel=1e-12, abs=1e-300)


@settings(max_examples=40, deadline=None)
@given(coeffs, coeffs)
def test_inner_symmetric_and_integration_by_parts(a, b):
    g = Grid("periodic", TWO_PI, 64)
    x = g.x
    f = Field(g, a[0] * np.sin(x) + a[1] * np.cos(3 * x) + a[2] * np.sin(5 * x))
    h = Field(g, b[0] * np.cos(x) + b[1] * np.sin(2 * x) + b[2] * np.cos(5 * x))
    assert inner(f, h) == pytest.approx(inner(h, f), abs=1e-12)
    assert inner(derivative(f, 1), h) == pytest.approx(-inner(f, derivative(h, 1)), abs=1e-10)
