import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nonlocal_lab.barriers import (
    BarrierProfile,
    CalibrationFailure,
    barrier_field,
    calibrate_subsolution,
    calibrate_supersolution,
    dyadic_sample,
    eval_barrier,
    kink_check,
    verify_barrier,
)
from nonlocal_lab.frac1d import frac_lap_field
from nonlocal_lab.operators import EllipticityBounds, pucci_all
from nonlocal_lab.spectral import aligned_rule

B = EllipticityBounds(1.0, 2.0, 0.5)
DIST_POWERS = ["phi1_dist_pow_s_out", "phi2_dist_pow_s_in", "phi3_dist_pow_3s2_out", "phi4_dist_pow_3s2_in"]


@pytest.mark.parametrize(
    "kind,r,expected",
    [
        ("phi1_dist_pow_s_out", 1.25, 0.25**0.5),
        ("phi1_dist_pow_s_out", 0.5, 0.0),
        ("phi2_dist_pow_s_in", 0.75, 0.25**0.5),
        ("phi2_dist_pow_s_in", 1.5, 0.0),
        ("phi3_dist_pow_3s2_out", 2.0, 1.0),
        ("phi4_dist_pow_3s2_in", 0.0, 1.0),
    ],
)
def test_distance_powers(kind, r, expected):
    b = BarrierProfile(kind, 0.5)
    assert eval_barrier(b, np.array([0.0, r])) == pytest.approx(expected)


@given(st.sampled_from(DIST_POWERS + ["supersolution_phi1"]), st.floats(0.0, 3.0), st.floats(0, 6.3))
def test_field_matches_closed_form(kind, r, a):
    b = BarrierProfile(kind, 0.5, eps=1 / 32, C=3.0)
    x = np.array([[r * np.cos(a), r * np.sin(a)]])
    assert barrier_field(b)(x)[0] == pytest.approx(eval_barrier(b, x[0]), abs=1e-14)


def test_supersolution_is_capped_outside_b2():
    b = BarrierProfile("supersolution_phi1", 0.5, eps=1 / 32, C=3.0)
    assert eval_barrier(b, np.array([0.0, 2.5])) == pytest.approx(3.0)
    assert eval_barrier(b, np.array([0.0, 1.0])) == 0.0


def test_subsolution_is_bounded_by_one():
    b = BarrierProfile("subsolution_phi2", 0.5, eps=1 / 512, C=1.5, c=1 / (2 * 1.5**8), N=8)
    r = np.linspace(0, 1.2, 1201)
    v = eval_barrier(b, np.stack([0 * r, r], axis=-1))
    assert v.max() <= 1.0 + 1e-12 and np.all(v[r >= 1] == 0)


def test_profile_validation():
    with pytest.raises(ValueError):
        BarrierProfile("phi9", 0.5)
    with pytest.raises(ValueError):
        BarrierProfile("phi1_dist_pow_s_out", 1.0)


@pytest.mark.parametrize("kind", DIST_POWERS + ["supersolution_phi1"])
def test_dyadic_sample_geometry(kind):
    b = BarrierProfile(kind, 0.5, eps=1 / 32)
    pts = dyadic_sample(b)
    r = np.linalg.norm(pts, axis=-1)
    d = np.abs(r - 1.0)
    assert pts.shape == (20, 2)
    assert d.min() == pytest.approx(1e-3) if kind != "supersolution_phi1" else d.min() <= 1e-3
    ratios = d[1:] / d[:-1]
    np.testing.assert_allclose(ratios, ratios[0])
    np.testing.assert_array_equal(pts, dyadic_sample(b))


# mpmath references for (-Delta)^s (1 - |t|)_+^s at t = 1/2 (tests/_oracles.py), frozen
TENT = {0.3: 0.76228258770079113, 0.5: 0.69465778381240907, 0.75: 0.52457250277768144}


@pytest.mark.parametrize("s", sorted(TENT))
def test_interior_power_1d_frozen(s):
    b = BarrierProfile("phi2_dist_pow_s_in", s, n=1)
    assert frac_lap_field(barrier_field(b), 0.5, s).value == pytest.approx(TENT[s], rel=1e-10)


@pytest.mark.parametrize("n", [1, 2])
@pytest.mark.parametrize("kind", DIST_POWERS)
def test_distance_power_inequalities_on_short_sample(kind, n):
    b = BarrierProfile(kind, 0.5, n=n)
    rep = verify_barrier(b, B, dyadic_sample(b)[[0, 7, 14]])
    assert rep.passed, [r for r in rep.rows if r.status != "pass"]
    for row in rep.rows:
        assert row.error < 0.1 * max(1.0, abs(row.lhs))


def test_error_estimate_covers_refined_value():
    # phi4 has the slowest angular convergence: the sign split per direction
    # leaves an unaligned kink in the angular integrand
    b = BarrierProfile("phi4_dist_pow_3s2_in", 0.5)
    x = dyadic_sample(b)[7]
    coarse = verify_barrier(b, B, [x]).rows[0]
    fine = pucci_all(barrier_field(b), x, B, aligned_rule(x, (1.0,), points=32, levels=12)).star_minus
    assert abs(coarse.lhs - fine.value) <= coarse.error


def test_points_outside_region_are_rejected():
    b = BarrierProfile("phi2_dist_pow_s_in", 0.5)
    rep = verify_barrier(b, B, [[0.0, 0.9], [0.0, 1.5], [0.2, 0.0]])
    assert len(rep.rejected) == 2
    assert rep.passed
    none = verify_barrier(b, B, [[0.0, 1.5]])
    assert not none.passed


def test_wrong_sign_is_reported():
    # phi1 is a subsolution, so asking for M+ <= -1 of a scaled copy fails
    b = BarrierProfile("supersolution_phi1", 0.5, eps=0.5, C=1e-3)
    rep = verify_barrier(b, B, [[0.0, 1.2]])
    assert not rep.passed and rep.rows[0].status == "fail"


def test_subsolution_has_no_downward_kinks():
    b = BarrierProfile("subsolution_phi2", 0.5, eps=1 / 512, C=1.5, c=1.0, N=8)
    rows = kink_check(b)
    assert len(rows) == 7
    for r, left, right in rows:
        assert right >= left


@pytest.mark.parametrize("fn", [calibrate_supersolution, calibrate_subsolution])
def test_calibration_input_checks(fn):
    with pytest.raises(ValueError):
        fn(0.99, B)


def test_supersolution_calibration_failure_is_reported():
    # with a huge ellipticity ratio no sampled annulus reaches M+ <= -1 this fast
    with pytest.raises(CalibrationFailure):
        calibrate_supersolution(0.5, EllipticityBounds(1e-6, 1e-6, 0.5), eps_min=0.2, per_level=1)
