import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nonlocal_lab.analysis import holder_fit, lds_regularity_check, oscillation_decay, quotient
from nonlocal_lab.core import Domain, Grid, GridFunction, distance_function
from nonlocal_lab.operators import KernelSpec
from nonlocal_lab.spectral import SpectralMeasure

S = 0.5
HALF = Domain("half_space_truncation", (0.0, 0.5), (1.0, 0.5))
H = 1 / 128
GRID = Grid((-1 - 4 * H, -4 * H), (1 + 4 * H, 1 + 4 * H), H)


def half_space_quotient(f):
    """Quotient field of u = d^s f on the truncated half space."""
    P = GRID.points()
    d = distance_function(HALF, P)
    u = GridFunction(GRID, d**S * f(P))
    return quotient(u, HALF, S)


def test_quotient_masks_band_and_recovers_factor():
    q = half_space_quotient(lambda P: 2.0 + P[:, 0])
    P = q.points
    assert np.all(np.isnan(q.values[~q.mask]))
    np.testing.assert_allclose(q.values[q.mask], 2.0 + P[q.mask, 0], rtol=1e-12)
    assert q.kept == int(np.sum(distance_function(HALF, P) > H))


@pytest.mark.parametrize("alpha", [0.3, 0.6, 0.9])
def test_oscillation_decay_recovers_power(alpha):
    # tangential profile anchored at a node: the masked band does not lift the minimum
    z = np.array([0.125, 0.0])
    q = half_space_quotient(lambda P: 1.0 + np.abs(P[:, 0] - z[0]) ** alpha)
    fit = oscillation_decay(q, z, 6, 0, ratio=2.0, h=H)
    # the masked band shortens the widest chord of the small balls, which
    # biases the slope upward by about 12% at r = 4h
    assert 1.0 <= fit.alpha / alpha <= 1.2
    assert fit.r2 > 0.99 and not fit.exact


def test_degree_one_removes_linear_part():
    z = np.array([0.0, 0.0])
    f = lambda P: 1.0 + 0.4 * P[:, 0] - 0.2 * P[:, 1] + np.abs(P[:, 0]) ** 1.5
    q = half_space_quotient(f)
    d0 = oscillation_decay(q, z, 6, 0, ratio=2.0, h=H)
    d1 = oscillation_decay(q, z, 6, 1, ratio=2.0, h=H)
    assert 1.0 <= d0.alpha / 1.0 <= 1.3
    assert 1.0 <= d1.alpha / 1.5 <= 1.3
    assert d1.alpha > d0.alpha + 0.3


@pytest.mark.parametrize("degree,f", [(0, lambda P: 3.0 + 0 * P[:, 0]), (1, lambda P: 1.0 + P[:, 0] - 2 * P[:, 1])])
def test_exact_fits_are_flagged(degree, f):
    fit = oscillation_decay(half_space_quotient(f), (0.0, 0.0), 4, degree, ratio=2.0)
    assert fit.exact and math.isinf(fit.alpha)
    assert fit.as_dict()["alpha"] is None


def test_k_reduction_is_reported():
    q = half_space_quotient(lambda P: 1.0 + P[:, 0] ** 2)
    fit = oscillation_decay(q, (0.0, 0.0), 12, 0, ratio=2.0, h=H)
    assert fit.K_used < 12 and 2.0 ** -fit.K_used >= 4 * H
    assert "reduced" in fit.note


@pytest.mark.parametrize(
    "kw",
    [dict(z=(0.0, 0.3), degree=0), dict(z=(0.0, 0.0), degree=2), dict(z=(0.0, 0.0), degree=0, ratio=1.0)],
)
def test_oscillation_decay_input_checks(kw):
    q = half_space_quotient(lambda P: 1.0 + P[:, 0])
    z = kw.pop("z")
    with pytest.raises(ValueError):
        oscillation_decay(q, z, 4, **kw)


@settings(max_examples=10)
@given(st.floats(0.2, 1.0))
def test_holder_fit_on_powers(a):
    x = np.linspace(-1, 1, 401)
    # bins are coarse near the grid scale; the estimator is accurate to about 0.1
    assert holder_fit(np.abs(x) ** a, x) == pytest.approx(a, abs=0.1)


def test_holder_fit_edge_cases():
    x = np.linspace(0, 1, 101)
    assert math.isinf(holder_fit(np.ones_like(x), x))
    assert holder_fit(3 * x, x) == pytest.approx(1.0, abs=0.1)
    with pytest.raises(ValueError):
        holder_fit(x[:10], x[:10])


def test_lds_half_space_is_zero():
    L = KernelSpec("star", S, SpectralMeasure("trig_polynomial", 1.0, 2.0, {"coeffs": [1.5, 0.3, 0.2]}))
    rep = lds_regularity_check(L, HALF, count=6, half_space=True)
    assert rep.sup_norm < 1e-8


def test_lds_ball_is_bounded():
    L = KernelSpec("star", S, SpectralMeasure.constant(1.0))
    D = Domain("ball", (0.0, 0.0), 1.0)
    rep = lds_regularity_check(L, D, distances=np.geomspace(0.2, 0.002, 8))
    # L(d^s) stays bounded up to the boundary of a smooth domain
    assert rep.sup_norm < 5.0
    assert max(rep.errors) < 1e-2
    assert np.all(np.diff(rep.values) > 0)
    with pytest.raises(ValueError):
        lds_regularity_check(L, HALF)
