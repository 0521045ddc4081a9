import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nonlocal_lab.cli import FLATTEN_PROBES, flatten_rows
from nonlocal_lab.flatten import (
    TransformedKernel,
    decompose,
    holder_in_x,
    identity_diffeo,
    kernel_bounds,
    linear_diffeo,
    odd_cancellation_check,
    parabola_diffeo,
    transform_kernel,
)
from nonlocal_lab.spectral import SpectralMeasure

ONE = SpectralMeasure.constant(1.0)
GAMMA = 0.5


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def parabola_leading_terms(x, th, s, kappa=0.5, c=0.25, gamma=GAMMA):
    # y = r v + r^2 w / 2 + ..., det D phi = 1, so
    # K = (|v|^2 + r v.w + ...)^(-1-s)
    g1 = 2 * kappa * x[0] + c * (2 + gamma) * abs(x[0]) ** (1 + gamma) * np.sign(x[0])
    g2 = 2 * kappa + c * (2 + gamma) * (1 + gamma) * abs(x[0]) ** gamma
    v = np.array([th[0], th[1] - g1 * th[0]])
    w = np.array([0.0, -g2 * th[0] ** 2])
    n2 = v @ v
    a1 = n2 ** (-1 - s)
    a2 = -(1 + s) * n2 ** (-1 - s) * (v @ w) / n2
    return a1, a2


def test_identity_kernel_is_mu():
    mu = SpectralMeasure("trig_polynomial", 0.5, 1.5, {"coeffs": [1.0, 0.3, 0.2]})
    Z = np.array([[0.3, 0.1], [-0.2, 0.4], [0.01, -0.02]])
    K = transform_kernel(identity_diffeo(), mu, [0.1, 0.2], Z, 0.5)
    np.testing.assert_allclose(K, mu(Z / np.linalg.norm(Z, axis=1)[:, None]), rtol=1e-14)


def test_identity_decomposition_is_exact():
    d = decompose(TransformedKernel(ONE, identity_diffeo(), 0.5), [0.0, 0.0], [1.0, 1.0])
    assert d.exact and d.a2 == pytest.approx(0.0, abs=1e-12)
    assert d.a1 == pytest.approx(1.0, abs=1e-12)
    assert max(d.remainders) <= 1e-12


@pytest.mark.parametrize("s", [0.3, 0.5, 0.8])
def test_linear_diffeo_closed_form(s):
    A = np.array([[2.0, 0.5], [0.0, 1.5]])
    k = TransformedKernel(ONE, linear_diffeo(A), s)
    th = unit([1.0, -2.0])
    expected = np.linalg.norm(A @ th) ** (-2 - 2 * s) * abs(np.linalg.det(A))
    d = decompose(k, [0.2, 0.1], th)
    assert d.a1 == pytest.approx(expected, rel=1e-10)
    assert abs(d.a2) < 1e-9
    # scaling by 2 leaves the kernel at 2^-(2+2s) 2^2
    K = transform_kernel(linear_diffeo(2 * np.eye(2)), ONE, [0, 0], [0.1, 0.0], s)
    assert K == pytest.approx(2.0 ** (-2 * s))


def test_linear_diffeo_rejects_singular():
    with pytest.raises(ValueError):
        linear_diffeo([[1.0, 2.0], [0.5, 1.0]])


def test_zero_offset_rejected():
    with pytest.raises(ValueError):
        transform_kernel(identity_diffeo(), ONE, [0, 0], [0.0, 0.0], 0.5)


@pytest.mark.parametrize("radii", [(0.1, 0.05, 0.02), (0.6, 0.3, 0.1, 0.05), (0.1, 0.05, 0.01, 1e-5)])
def test_decompose_radius_checks(radii):
    with pytest.raises(ValueError):
        decompose(TransformedKernel(ONE, identity_diffeo(), 0.5), [0, 0], [1, 0], radii)


@pytest.mark.parametrize("x, th", FLATTEN_PROBES)
def test_parabola_matches_leading_terms(x, th):
    s = 0.5
    k = TransformedKernel(ONE, parabola_diffeo(gamma=GAMMA), s)
    t = unit(th)
    d = decompose(k, x, t)
    a1, a2 = parabola_leading_terms(x, t, s)
    assert d.a1 == pytest.approx(a1, rel=1e-9)
    assert d.a2 == pytest.approx(a2, rel=1e-5, abs=1e-6)


def test_parabola_parity_and_remainder_order():
    rows = flatten_rows(gamma=GAMMA)
    assert len(rows) == len(FLATTEN_PROBES)
    for r in rows:
        assert r["a1_parity"] <= 1e-6
        assert r["a2_parity"] <= 1e-6
        assert r["slope"] >= 1 + GAMMA - 0.1


def test_remainder_is_monotone_on_parabola():
    k = TransformedKernel(ONE, parabola_diffeo(gamma=GAMMA), 0.5)
    d = decompose(k, [0.3, 0.1], [1.0, 0.0])
    assert d.monotone and not d.exact
    assert np.all(np.diff(d.remainders) <= 0)


def test_parabola_diffeo_inverse_and_validation():
    d = parabola_diffeo()
    P = np.array([[0.3, -0.2], [-0.7, 0.4]])
    np.testing.assert_allclose(d.inverse(d.phi(P)), P, atol=1e-15)
    d.check(P)
    with pytest.raises(ValueError):
        parabola_diffeo(gamma=0.0)


@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
@pytest.mark.parametrize("power", [1, 3])
def test_odd_densities_cancel(s, power):
    assert abs(odd_cancellation_check(s, lambda t: t[:, 1] ** power)) <= 1e-6


@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
def test_even_density_does_not_cancel(s):
    assert abs(odd_cancellation_check(s, lambda t: t[:, 1] ** 2)) >= 1e-2


def test_odd_cancellation_checks_s():
    with pytest.raises(ValueError):
        odd_cancellation_check(1.0, lambda t: t[:, 1])


def test_holder_in_x_is_finite():
    k = TransformedKernel(ONE, parabola_diffeo(gamma=GAMMA), 0.5)
    out = holder_in_x(k, unit([1.0, 1.0]), [[0.0, 0.0], [0.05, 0.0], [0.2, 0.0], [-0.1, 0.1]])
    assert out["gamma"] == GAMMA
    assert 0 < out["constant"] < 10
    # a1 depends on x1 only through the boundary slope
    assert out["a1"][0] == pytest.approx(1.0, abs=1e-9)


@given(st.floats(-0.9, 0.9), st.floats(-0.9, 0.9), st.floats(0, 2 * math.pi), st.floats(1e-3, 0.5))
def test_kernel_within_sampled_bounds(x1, x2, ang, r):
    d = parabola_diffeo()
    lo, hi = kernel_bounds(d, ONE, 0.5, samples=2000)
    z = r * np.array([math.cos(ang), math.sin(ang)])
    x = np.array([x1, x2])
    if np.any(np.abs(x + z) > 1):
        return
    K = transform_kernel(d, ONE, x, z, 0.5)
    # bi-Lipschitz bounds hold along segments; allow the sampling gap
    assert 0.9 * lo <= K <= 1.1 * hi
