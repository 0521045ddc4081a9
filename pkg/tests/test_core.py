import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nonlocal_lab.core import (
    ConstantField,
    Domain,
    FarFieldModel,
    GaussianBump,
    Grid,
    GridFunction,
    PowerProfile,
    as_point,
    distance_function,
    eval_profile,
    weighted_l1_norm,
)


@pytest.mark.parametrize(
    "args",
    [
        ("disk", (0.0,), 1.0),
        ("interval", (0.0, 0.0), 1.0),
        ("ball", (0.0, 0.0), -1.0),
        ("box", (0.0, 0.0), (1.0, 2.0, 3.0)),
    ],
)
def test_domain_rejects_bad_input(args):
    with pytest.raises(ValueError):
        Domain(*args)


def test_half_space_truncation_must_touch_hyperplane():
    with pytest.raises(ValueError):
        Domain("half_space_truncation", (0.0, 1.0), (1.0, 0.5))


@given(st.floats(-0.999, 0.999))
def test_interval_distance_exact_in_band(x):
    D = Domain("interval", (0.0,), 1.0)
    d = distance_function(D, np.array([[x]]))[0]
    exact = 1 - abs(x)
    if exact <= D.boundary_band:
        assert d == pytest.approx(exact, abs=1e-15)
    else:
        assert D.boundary_band <= d <= exact


def test_distance_zero_outside_and_monotone_inside():
    D = Domain("ball", (0.0, 0.0), 1.0)
    r = np.linspace(0, 1.5, 301)
    d = distance_function(D, np.stack([r, 0 * r], axis=-1))
    assert np.all(d[r >= 1] == 0)
    assert np.all(np.diff(d[r < 1]) <= 1e-15)


def test_half_space_distance_is_xn():
    D = Domain("half_space_truncation", (0.0, 0.5), (1.0, 0.5))
    X = np.array([[0.3, 0.2], [-0.9, 0.01], [0.1, -0.2]])
    np.testing.assert_allclose(distance_function(D, X), [0.2, 0.01, 0.0])


def test_grid_geometry():
    g = Grid((-1.0, 0.0), (1.0, 1.0), 0.125)
    assert g.shape == (17, 9) and g.size == 153 and g.n == 2
    P = g.points()
    assert P.shape == (153, 2)
    np.testing.assert_array_equal(P[0], [-1.0, 0.0])
    np.testing.assert_array_equal(P[-1], [1.0, 1.0])


@pytest.mark.parametrize("lo,hi,h", [((0.0,), (1.0,), 0.3), ((0.0,), (0.5,), 0.125), ((0.0,), (1.0,), -0.1)])
def test_grid_rejects_bad_boxes(lo, hi, h):
    with pytest.raises(ValueError):
        Grid(lo, hi, h)


def test_far_field_admissibility():
    ff = FarFieldModel("power_profile", direction=(1.0,), beta=0.9)
    ff.check_admissible(0.5)
    with pytest.raises(ValueError):
        ff.check_admissible(0.4)
    with pytest.raises(ValueError):
        FarFieldModel("power_profile", direction=(1.0, 1.0), beta=0.5)
    with pytest.raises(ValueError):
        FarFieldModel("exotic")


def test_grid_function_reproduces_cubics_and_far_field():
    g = Grid((-2.0,), (2.0,), 0.25)
    u = GridFunction.from_function(g, lambda X: X[:, 0] ** 3 - X[:, 0], FarFieldModel("bounded_constant", 0.7))
    x = np.array([[-1.13], [0.4], [1.77]])
    np.testing.assert_allclose(u(x), x[:, 0] ** 3 - x[:, 0], atol=1e-12)
    assert u(np.array([[3.0], [-5.0]])) == pytest.approx([0.7, 0.7])


def test_grid_function_rejects_nan():
    g = Grid((0.0,), (1.0,), 0.125)
    with pytest.raises(ValueError):
        GridFunction(g, np.full(9, np.nan))


@given(st.floats(0.05, 1.95), st.floats(0.01, 10.0), st.floats(0.1, 10.0))
def test_power_profile_homogeneity(beta, t, lam):
    p = PowerProfile((0.0, 1.0), beta)
    x = np.array([0.3, t])
    assert eval_profile(p, lam * x) == pytest.approx(lam**beta * eval_profile(p, x), rel=1e-12)
    assert eval_profile(p, np.array([0.3, -t])) == 0.0


def test_power_profile_validates_direction():
    with pytest.raises(ValueError):
        PowerProfile((0.6, 0.7), 0.5)
    with pytest.raises(ValueError):
        as_point((1.0, 2.0), 3)


def test_field_algebra():
    a = GaussianBump((0.0,), 0.3)
    b = ConstantField(2.0)
    X = np.array([[0.0], [0.5]])
    np.testing.assert_allclose((a + b)(X), a(X) + 2.0)
    np.testing.assert_allclose((a - b)(X), a(X) - 2.0)
    np.testing.assert_allclose((3.0 * a)(X), 3.0 * a(X))


@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
def test_weighted_norm_of_constant_1d(s):
    # int (1-s)(1+|x|)^(-1-2s) dx = (1-s)/s
    g = Grid((-2.0,), (2.0,), 1 / 64)
    u = GridFunction(g, np.ones(g.size), FarFieldModel("bounded_constant", 1.0))
    assert weighted_l1_norm(u, s) == pytest.approx((1 - s) / s, rel=1e-6)


@pytest.mark.parametrize("s", [0.3, 0.5, 0.8])
def test_weighted_norm_of_constant_2d(s):
    # 2 pi (1-s) int_0^inf r (1+r)^(-2-2s) dr = pi (1-s) / (s (2s+1))
    g = Grid((-1.0, -1.0), (1.0, 1.0), 1 / 16)
    u = GridFunction(g, np.ones(g.size), FarFieldModel("bounded_constant", 1.0))
    assert weighted_l1_norm(u, s) == pytest.approx(math.pi * (1 - s) / (s * (2 * s + 1)), rel=1e-5)


def test_weighted_norm_power_far_field_matches_profile():
    # (x)_+^(1/2) at s = 1/2: compare the grid + tail split against a direct quadrature
    from scipy.integrate import quad

    s, b = 0.5, 0.5
    g = Grid((-1.0,), (1.0,), 1 / 128)
    ff = FarFieldModel("power_profile", direction=(1.0,), beta=b)
    u = GridFunction.from_function(g, lambda X: np.maximum(X[:, 0], 0) ** b, ff)
    exact = quad(lambda x: (1 - s) * x**b * (1 + x) ** (-1 - 2 * s), 0, np.inf, limit=200)[0]
    assert weighted_l1_norm(u, s) == pytest.approx(exact, rel=1e-4)


@given(st.lists(st.floats(-5, 5), min_size=17, max_size=17), st.floats(1.0, 3.0))
def test_weighted_norm_is_monotone(vals, factor):
    g = Grid((-1.0,), (1.0,), 0.125)
    u = GridFunction(g, np.array(vals))
    v = GridFunction(g, factor * np.array(vals))
    assert weighted_l1_norm(v, 0.5) >= weighted_l1_norm(u, 0.5) - 1e-14
