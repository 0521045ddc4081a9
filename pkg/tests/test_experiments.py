import math

import pytest

from nonlocal_lab.experiments import (
    EXPERIMENTS,
    ExperimentResult,
    ExperimentSpec,
    half_space_setup,
    run_boundary_harnack,
    run_counterexample_l0,
    run_experiment,
    run_experiments,
    run_higher_regularity,
)


@pytest.fixture(scope="module")
def counterexample():
    return run_counterexample_l0(s_values=(0.5,), ratio_sweep=(1.5, 2.0, 4.0))


@pytest.fixture(scope="module")
def harnack():
    return run_boundary_harnack(h=1 / 16, K=4)


@pytest.fixture(scope="module")
def regularity():
    return run_higher_regularity()


def test_counterexample_gates(counterexample):
    assert counterexample.passed, counterexample.failed_gates()
    row = counterexample.rows[0]
    assert row["beta1"] < 0.5 < row["beta2"]
    # the s-power is a supersolution of M+ and a subsolution of M-: neither vanishes
    assert row["s_m_plus"] > 0 > row["s_m_minus"]


def test_counterexample_equal_row(counterexample):
    last = counterexample.rows[-1]
    assert last["Lam"] == last["lam"]
    assert last["beta1"] == pytest.approx(0.5, abs=1e-4)
    assert last["beta2"] == pytest.approx(0.5, abs=1e-4)


def test_gap_grows_with_ratio(counterexample):
    sweep = counterexample.reported["ratio_sweep"]
    assert sweep["increasing"]
    assert len(sweep["gaps"]) == 3


def test_counterexample_needs_gap():
    with pytest.raises(ValueError):
        run_counterexample_l0(lam=2.0, Lam=2.0)


def test_boundary_harnack_gates(harnack):
    assert harnack.passed, harnack.failed_gates()
    problems = {r["problem"] for r in harnack.rows}
    assert problems == {"isotropic", "trig", "power_datum"}
    assert all(r["solver_residual"] < 1e-8 for r in harnack.rows)


def test_boundary_harnack_rejects_unknown_problem():
    with pytest.raises(ValueError):
        run_boundary_harnack(h=1 / 16, K=4, problems=("nope",))


def test_higher_regularity_gates(regularity):
    assert regularity.passed, regularity.failed_gates()
    assert regularity.reported["bellman_converged"]
    # both controls are active somewhere
    assert min(regularity.reported["policy_counts"]) > 0
    assert regularity.reported["holder_exponent"] >= 0.4


def test_higher_regularity_checks_gamma():
    with pytest.raises(ValueError):
        run_higher_regularity(gamma=1.0)


@pytest.mark.parametrize("h", [0.3, 1 / 12.5])
def test_half_space_setup_needs_aligned_grid(h):
    with pytest.raises(ValueError):
        half_space_setup(h)


def test_half_space_setup_geometry():
    D, g = half_space_setup(1 / 16)
    assert g.h == 1 / 16
    assert D.contains([[0.0, 0.5]]).all()


@pytest.mark.parametrize("kwargs", [dict(id="", kind="boundary_harnack"), dict(id="a", kind="nope")])
def test_spec_validation(kwargs):
    with pytest.raises(ValueError):
        ExperimentSpec(**kwargs)


def test_run_experiment_applies_tolerances():
    spec = ExperimentSpec("bh", "boundary_harnack", {"h": 1 / 16, "K": 4}, {"r2_min": 1.01}, seed=3)
    res = run_experiment(spec)
    assert isinstance(res, ExperimentResult)
    assert res.id == "bh" and res.seed == 3
    # an R^2 above 1 cannot be met, so the tolerance reached the runner
    assert not res.passed
    assert set(res.failed_gates()) == {"isotropic_r2", "trig_r2"}


def test_run_experiments_unique_ids():
    spec = ExperimentSpec("x", "boundary_harnack", {"h": 1 / 16, "K": 4})
    with pytest.raises(ValueError):
        run_experiments([spec, spec])
    out = run_experiments([spec], workers=1)
    assert out[0].passed


def test_registry():
    assert set(EXPERIMENTS) == {"counterexample_l0", "boundary_harnack", "higher_regularity"}
    assert math.isfinite(ExperimentResult("a", "b", [], {"g": True}).elapsed)
