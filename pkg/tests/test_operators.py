import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nonlocal_lab.core import ConstantField, GaussianBump, PowerProfile
from nonlocal_lab.operators import (
    EllipticityBounds,
    IsaacsOperator,
    KernelSpec,
    RoughDensity,
    eval_directional,
    eval_linear,
    find_beta_roots,
    isaacs_eval,
    power_constants,
    power_constants_estimate,
    pucci_all,
    pucci_rough,
    pucci_star,
)
from nonlocal_lab.spectral import SpectralMeasure

# mpmath references (tests/_oracles.py), frozen; n = 2, lam = 1, Lam = 2
STAR_POWER = {
    (0.75, 1.2): (3.0270699927713963, 1.5135349963856981),
    (0.5, 0.05): (-0.99176176875472725, -1.9835235375094545),
}
ROUGH_S_POWER = {0.4: 0.83628573086702719, 0.5: 0.54930614433405483, 0.6: 0.37174375136275003, 0.75: 0.20075296459461066}
INDICATOR_S_POWER = {0.4: -0.084205867159572069, 0.5: -0.10023245004585176, 0.6: -0.10999530532231685, 0.75: -0.10509894498402414}

TRIG = SpectralMeasure("trig_polynomial", 1.0, 2.0, {"coeffs": [1.5, 0.3, 0.2]})
CAP = SpectralMeasure("smoothed_indicator", 1.0, 2.0, {"axis": 1.0, "width": 0.6, "gamma": 0.5})


def bounds(s):
    return EllipticityBounds(1.0, 2.0, s)


@pytest.mark.parametrize("args", [(2.0, 1.0, 0.5), (0.0, 1.0, 0.5), (1.0, 2.0, 1.0)])
def test_bounds_validation(args):
    with pytest.raises(ValueError):
        EllipticityBounds(*args)


def test_kernel_spec_validation():
    with pytest.raises(ValueError):
        KernelSpec("weird", 0.5, TRIG)
    with pytest.raises(ValueError):
        KernelSpec("star", 0.5)
    with pytest.raises(ValueError):
        KernelSpec("rough", 0.5)
    with pytest.raises(ValueError):
        KernelSpec("star", 1.2, TRIG)
    with pytest.raises(ValueError):
        RoughDensity(lambda Y: np.full(Y.shape[:-1], 3.0), 1.0, 2.0)


def test_rough_density_is_even():
    b = RoughDensity(lambda Y: 1.5 + 0.5 * np.tanh(Y[..., 0] + 2 * Y[..., 1]), 1.0, 2.0)
    Y = np.array([[0.3, -0.7], [-1.0, 0.2]])
    np.testing.assert_array_equal(b(Y), b(-Y))


@pytest.mark.parametrize("key", sorted(STAR_POWER))
def test_star_power_constants_frozen(key):
    s, beta = key
    hi, lo = power_constants(s, beta, bounds(s))
    assert hi == pytest.approx(STAR_POWER[key][0], rel=1e-8)
    assert lo == pytest.approx(STAR_POWER[key][1], rel=1e-8)


@pytest.mark.parametrize("s", sorted(ROUGH_S_POWER))
def test_rough_s_power_frozen(s):
    hi, lo = power_constants_estimate(s, s, bounds(s), "rough")
    assert hi.value == pytest.approx(ROUGH_S_POWER[s], rel=1e-8)
    # the s-power is harmonic for every homogeneous kernel, so P = N per direction
    assert lo.value == pytest.approx(-ROUGH_S_POWER[s], rel=1e-8)


@pytest.mark.parametrize("s", sorted(INDICATOR_S_POWER))
@pytest.mark.parametrize("x1", [0.0, 0.37, -1.25])
def test_indicator_kernel_frozen(s, x1):
    L = KernelSpec("rough", s, b=RoughDensity.ball_indicator(1.0, 2.0, 0.5))
    est = eval_linear(L, PowerProfile((0.0, 1.0), s), (x1, 1.0))
    assert est.value == pytest.approx(INDICATOR_S_POWER[s], rel=1e-8)


@pytest.mark.parametrize("mu", [SpectralMeasure.constant(1.0), TRIG, CAP], ids=["iso", "trig", "cap"])
@pytest.mark.parametrize("s", [0.3, 0.5, 0.8])
def test_routes_agree_on_bumps(mu, s):
    L = KernelSpec("star", s, mu)
    u = GaussianBump((0.1, -0.2), 0.4)
    x = (0.3, 0.1)
    a = eval_linear(L, u, x, route="polar")
    b = eval_linear(L, u, x, route="volumetric")
    c = eval_directional(L, u, x)
    assert abs(a.value - b.value) <= a.error + b.error + 1e-9 * abs(a.value)
    assert c.value == pytest.approx(a.value, rel=1e-12)


def test_volumetric_route_needs_compact_field():
    L = KernelSpec("star", 0.5, TRIG)
    with pytest.raises(ValueError):
        eval_linear(L, PowerProfile((0.0, 1.0), 0.5), (0.0, 1.0), route="volumetric")
    with pytest.raises(ValueError):
        eval_linear(L, GaussianBump((0.0, 0.0), 1.0), (0.0, 1.0), route="sideways")


def test_directional_needs_star_kernel():
    L = KernelSpec("rough", 0.5, b=RoughDensity.constant(1.0))
    with pytest.raises(ValueError):
        eval_directional(L, GaussianBump((0.0, 0.0), 1.0), (0.0, 0.0))


def test_constants_are_annihilated():
    L = KernelSpec("star", 0.5, TRIG)
    assert eval_linear(L, ConstantField(3.0, 2), (0.2, 0.4), route="polar").value == 0.0


@settings(max_examples=15)
@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(0.2, 0.9))
def test_extremal_ordering(x1, x2, s):
    u = GaussianBump((0.0, 0.0), 0.3) - 0.5 * GaussianBump((0.4, 0.1), 0.2)
    pv = pucci_all(u, (x1, x2), bounds(s))
    tol = 1e-9
    assert pv.rough_minus.value <= pv.star_minus.value + tol
    assert pv.star_minus.value <= pv.star_plus.value + tol
    assert pv.star_plus.value <= pv.rough_plus.value + tol
    # every admissible kernel sits in between
    Lv = eval_linear(KernelSpec("star", s, TRIG), u, (x1, x2), route="polar").value
    assert pv.star_minus.value - tol <= Lv <= pv.star_plus.value + tol


def test_extremal_sign_symmetry():
    u = GaussianBump((0.0, 0.0), 0.3) - 0.5 * GaussianBump((0.4, 0.1), 0.2)
    B = bounds(0.5)
    x = (0.2, 0.2)
    assert pucci_star(u, x, B, "+").value == pytest.approx(-pucci_star(-1.0 * u, x, B, "-").value, rel=1e-12)
    assert pucci_rough(u, x, B, "+").value == pytest.approx(-pucci_rough(-1.0 * u, x, B, "-").value, rel=1e-12)
    assert pucci_star(u, x, B, "+").value == pytest.approx(pucci_all(u, x, B).star_plus.value, rel=1e-12)
    with pytest.raises(ValueError):
        pucci_star(u, x, B, "*")


def test_equal_bounds_collapse():
    s = 0.5
    B = EllipticityBounds(1.5, 1.5, s)
    u = GaussianBump((0.0, 0.0), 0.3) - 0.5 * GaussianBump((0.4, 0.1), 0.2)
    x = (0.1, 0.3)
    pv = pucci_all(u, x, B)
    ref = eval_linear(KernelSpec("star", s, SpectralMeasure.constant(1.5)), u, x, route="polar").value
    for v in (pv.star_plus, pv.star_minus, pv.rough_plus, pv.rough_minus):
        assert v.value == pytest.approx(ref, rel=1e-12)


def test_power_constants_in_one_dimension():
    # n = 1: constant measure, L = -(1-s)/(2 c) (-Delta)^s on each side
    from nonlocal_lab.frac1d import c1s, frac_lap_power

    s, beta = 0.6, 0.9
    hi, lo = power_constants(s, beta, bounds(s), n=1)
    k = -(1 - s) / (2 * c1s(s)) * frac_lap_power(s, beta, 1.0) * 2  # both directions
    assert (hi, lo) == (pytest.approx(max(2 * k, k)), pytest.approx(min(2 * k, k)))


def test_beta_roots_star_class_at_s():
    b1, b2 = find_beta_roots(0.5, bounds(0.5), "star", tol=1e-4)
    assert abs(b1 - 0.5) < 1e-4 and abs(b2 - 0.5) < 1e-4


def test_bellman_and_isaacs_eval():
    s = 0.5
    L0 = KernelSpec("star", s, SpectralMeasure.constant(1.0))
    L1 = KernelSpec("star", s, TRIG)
    u = GaussianBump((0.0, 0.0), 0.5)
    x = (0.1, 0.2)
    v0 = eval_linear(L0, u, x, route="polar").value
    v1 = eval_linear(L1, u, x, route="polar").value
    I = IsaacsOperator.bellman([L0, L1], [0.0, lambda p: 0.25])
    val, pol = isaacs_eval(I, u, x, return_policy=True)
    assert val.value == pytest.approx(max(v0, v1 + 0.25))
    assert pol == ((0 if v0 >= v1 + 0.25 else 1), 0)
    # inf over b of sup over a
    J = IsaacsOperator((0, 1), (0, 1), {(0, 0): L0, (1, 0): L1, (0, 1): L1, (1, 1): L1}, {(0, 1): -1.0})
    assert isaacs_eval(J, u, x).value == pytest.approx(min(max(v0, v1), max(v1 - 1.0, v1)))


def test_isaacs_validation():
    L0 = KernelSpec("star", 0.5, TRIG)
    with pytest.raises(ValueError):
        IsaacsOperator((0, 1), (0,), {(0, 0): L0})
    with pytest.raises(ValueError):
        IsaacsOperator.bellman([L0, KernelSpec("star", 0.4, TRIG)])
    with pytest.raises(ValueError):
        IsaacsOperator.single(L0, cost=math.inf).cost(0, 0, (0.0, 0.0))


@pytest.mark.slow
def test_frozen_operator_values_against_mpmath():
    _oracles = pytest.importorskip("_oracles")
    assert float(_oracles.rough_s_power_plus(0.5, 1, 2)) == pytest.approx(ROUGH_S_POWER[0.5], rel=1e-14)
    hi, lo = _oracles.star_power_extremals(0.75, 1.2, 1, 2)
    assert (float(hi), float(lo)) == pytest.approx(STAR_POWER[(0.75, 1.2)], rel=1e-14)


@pytest.mark.parametrize("x", [(0.56, 0.86), (1.2, -0.9), (-0.1, 1.5)])
def test_volumetric_bound_covers_hessian_roundoff(x):
    # far from the bump the Hessian is small and its cancellation error dominates
    L = KernelSpec("star", 0.78, SpectralMeasure.constant(1.8, 1.0, 2.0))
    u = GaussianBump((0.046, 0.161), 0.615)
    a = eval_linear(L, u, x, route="volumetric")
    b = eval_directional(L, u, x)
    assert abs(a.value - b.value) <= a.error + b.error
