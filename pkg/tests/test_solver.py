import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nonlocal_lab.core import Domain, FarFieldModel, GaussianBump, Grid, GridFunction
from nonlocal_lab.operators import IsaacsOperator, KernelSpec, eval_linear
from nonlocal_lab.solver import (
    DirichletProblem,
    SolverConfig,
    SolverInputError,
    build_singular_stencil,
    build_stencil,
    convergence_study,
    solve,
    solve_isaacs,
    solve_linear,
    value_iteration,
)
from nonlocal_lab.spectral import SpectralMeasure

S = 0.5
L1 = KernelSpec("star", S, SpectralMeasure.constant(1.0, dim=1))
L1b = KernelSpec("star", S, SpectralMeasure.constant(2.0, lam=1.0, Lam=2.0, dim=1))
L2 = KernelSpec("star", S, SpectralMeasure.constant(1.0))
INTERVAL = Domain("interval", (0.0,), 1.0)


def interval_grid(h, pad=8):
    return Grid((-1 - pad * h,), (1 + pad * h,), h)


def exact_interval(x):
    # L = -(1-s)/c (-Delta)^s in 1D; (-Delta)^{1/2} (1-x^2)_+^{1/2} = 1
    return 2 / math.pi * np.sqrt(np.maximum(1 - x**2, 0.0))


def test_zero_problem_gives_zero():
    g = interval_grid(2 / 33)
    r = solve_linear(DirichletProblem(L1, INTERVAL, g))
    assert np.all(r.solution.values == 0.0)


def test_stencil_is_monotone_and_consistent():
    h = 2 / 33
    g = interval_grid(h)
    st_ = build_stencil(L1, g, INTERVAL)
    assert st_.weights.min() >= 0.0 and st_.far.min() >= 0.0
    np.testing.assert_allclose(st_.diag, -(st_.weights.sum(axis=1) + st_.far), atol=1e-12)
    np.testing.assert_allclose(st_.row_sums(), 0.0, atol=1e-9)


def test_stencil_converges_to_operator():
    errs = []
    for h in (1 / 32, 1 / 64, 1 / 128):
        g = Grid((-2.0,), (2.0,), h)
        st_ = build_stencil(L1, g, INTERVAL)
        u = GridFunction.from_function(g, lambda X: np.exp(-4 * X[:, 0] ** 2))
        got = st_.apply(u)
        pts = g.points()[st_.interior][:: int(1 / (8 * h))]
        ref = np.array([eval_linear(L1, u, x).value for x in pts])
        errs.append(np.max(np.abs(got[:: int(1 / (8 * h))] - ref)))
    # first-order consistency: hat interpolation against the singular kernel
    assert errs[0] < 0.7 / 32
    assert errs[1] / errs[0] < 0.6 and errs[2] / errs[1] < 0.6


@settings(max_examples=20)
@given(st.lists(st.floats(-2, 2), min_size=2, max_size=2), st.lists(st.floats(0, 1), min_size=2, max_size=2))
def test_comparison_principle(base, bump):
    g = interval_grid(2 / 33)
    x = g.points()[:, 0]
    f1 = base[0] + base[1] * np.sin(3 * x)
    f2 = f1 - bump[0] - bump[1] * np.cos(x) ** 2
    # L u1 = f1 >= f2 = L u2 with equal exterior data implies u1 <= u2
    mask = INTERVAL.contains(g.points())
    u1 = solve_linear(DirichletProblem(L1, INTERVAL, g, rhs=f1[mask])).solution.values
    u2 = solve_linear(DirichletProblem(L1, INTERVAL, g, rhs=f2[mask])).solution.values
    assert np.all(u1 <= u2 + 1e-12)


def test_exterior_data_respected_exactly():
    g = interval_grid(2 / 33)
    ext = lambda X: 0.3 + X[:, 0] ** 2
    p = DirichletProblem(L1, INTERVAL, g, rhs=-1.0, exterior=ext, far_field=FarFieldModel("bounded_constant", 1.7))
    r = solve_linear(p)
    pts = g.points()
    out = ~INTERVAL.contains(pts)
    np.testing.assert_array_equal(r.solution.values[out], ext(pts[out]))
    assert r.solution(np.array([[5.0]]))[0] == 1.7


@pytest.mark.parametrize("scheme,tol", [("standard", 0.03), ("singular", 1e-3)])
def test_interval_fractional_laplacian(scheme, tol):
    g = interval_grid(1 / 32, pad=16)
    r = solve_linear(DirichletProblem(L1, INTERVAL, g, rhs=-1.0), SolverConfig(scheme=scheme))
    x = g.points()[:, 0]
    assert np.max(np.abs(r.solution.values - exact_interval(x))) < tol


def test_singular_scheme_is_more_accurate_and_refines():
    errs = []
    for h in (1 / 16, 1 / 32, 1 / 64):
        g = interval_grid(h, pad=16)
        r = solve_linear(DirichletProblem(L1, INTERVAL, g, rhs=-1.0), SolverConfig(scheme="singular"))
        errs.append(np.max(np.abs(r.solution.values - exact_interval(g.points()[:, 0]))))
    assert errs[2] < errs[1] < errs[0]


def test_singular_scheme_needs_zero_exterior():
    g = interval_grid(1 / 32)
    with pytest.raises(SolverInputError):
        solve_linear(DirichletProblem(L1, INTERVAL, g, rhs=-1.0, exterior=1.0), SolverConfig(scheme="singular"))
    with pytest.raises(SolverInputError):
        build_singular_stencil(L2, Grid((-1.25, -1.25), (1.25, 1.25), 1 / 16), Domain("ball", (0.0, 0.0), 1.0))


def test_jacobi_matches_direct():
    g = interval_grid(2 / 33)
    p = DirichletProblem(L1, INTERVAL, g, rhs=lambda X: -1 + X[:, 0])
    a = solve_linear(p).solution.values
    b = solve_linear(p, SolverConfig(method="jacobi", tol=1e-12))
    assert b.converged
    np.testing.assert_allclose(b.solution.values, a, atol=1e-10)


def test_two_dimensional_ball():
    g = Grid((-1.25, -1.25), (1.25, 1.25), 1 / 16)
    D = Domain("ball", (0.0, 0.0), 1.0)
    r = solve(DirichletProblem(L2, D, g, rhs=-1.0))
    v = r.solution.values.reshape(g.shape)
    assert r.residual < 1e-10
    assert v.min() >= 0.0
    # radial symmetry on the grid
    np.testing.assert_allclose(v, v.T, atol=1e-12)
    np.testing.assert_allclose(v, v[::-1], atol=1e-12)


COSTS = [lambda X: 0.3 * np.sin(5 * X[:, 0]), lambda X: 0.5 * (1 + X[:, 0])]
BELLMAN = IsaacsOperator.bellman([L1, L1b], COSTS)


def bellman_problem():
    h = 2 / 65
    g = Grid((-1 - 8 * h,), (1 + 8 * h,), h)
    return DirichletProblem(BELLMAN, INTERVAL, g, rhs=lambda X: -1 + 0.5 * np.cos(3 * X[:, 0]))


def test_policy_iteration_matches_value_iteration():
    p = bellman_problem()
    assert INTERVAL.contains(p.grid.points()).sum() == 64
    r = solve_isaacs(p)
    v = value_iteration(p, tol=1e-10)
    assert r.converged and v.converged
    assert np.max(np.abs(r.solution.values - v.solution.values)) < 1e-6
    assert 0 < r.policy[0].sum() < 64  # both controls are used


def test_isaacs_two_player():
    La, Lb = L1, L1b
    I = IsaacsOperator((0, 1), (0, 1), {(0, 0): La, (1, 0): Lb, (0, 1): Lb, (1, 1): La}, {(0, 0): 0.1, (1, 0): lambda X: X[:, 0], (1, 1): -0.2})
    p = DirichletProblem(I, INTERVAL, bellman_problem().grid, rhs=-1.0)
    r = solve_isaacs(p)
    v = value_iteration(p)
    assert np.max(np.abs(r.solution.values - v.solution.values)) < 1e-6


def test_bellman_solution_dominates_each_control():
    # L_a u + c_a <= f = L_a w + c_a, so u - w is a supersolution with zero data
    p = bellman_problem()
    u = solve_isaacs(p).solution.values
    for L, c in zip((L1, L1b), COSTS):
        single = IsaacsOperator.single(L, c)
        w = solve(DirichletProblem(single, INTERVAL, p.grid, rhs=p.rhs)).solution.values
        assert np.all(u >= w - 1e-10)


@pytest.mark.parametrize(
    "kw",
    [{"method": "cg"}, {"scheme": "fancy"}, {"tol": 0.0}, {"damping": 1.5}],
)
def test_config_validation(kw):
    with pytest.raises(SolverInputError):
        SolverConfig(**kw)


def test_problem_validation():
    with pytest.raises(SolverInputError):
        DirichletProblem(L1, INTERVAL, Grid((-1.0,), (1.0,), 1 / 16))
    with pytest.raises(SolverInputError):
        DirichletProblem(L1, INTERVAL, interval_grid(1 / 16), far_field=FarFieldModel("power_profile", direction=(1.0,), beta=0.5))
    with pytest.raises(SolverInputError):
        solve_linear(DirichletProblem(L1, INTERVAL, interval_grid(1 / 16), rhs=np.ones(3)))
    with pytest.raises(SolverInputError):
        solve_linear(bellman_problem())


def test_convergence_study_rows():
    p = DirichletProblem(L1, INTERVAL, interval_grid(1 / 16), rhs=-1.0)
    rows = convergence_study(p, 3)
    assert [r["level"] for r in rows] == [0, 1, 2]
    assert math.isnan(rows[0]["diff"]) and rows[2]["diff"] < rows[1]["diff"]
    assert rows[2]["order"] > 0
    with pytest.raises(SolverInputError):
        convergence_study(p, 2)
