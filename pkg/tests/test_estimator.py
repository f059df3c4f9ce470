import math

import numpy as np
import pytest

from polyest.contrast import ContrastMatrix
from polyest.design import assemble_contrast, l1_ellitope_problem, solve_master_gaussian
from polyest.errors import DimensionError
from polyest.estimator import (
    PolyhedralEstimator,
    RiskReport,
    empirical_quantile,
    estimate,
    least_squares_baseline,
    monte_carlo_risk,
    p_bound_oracle,
    sample_signal,
    trial_rng,
)
from polyest.experiments import random_matrix
from polyest.noise import sample_gaussian
from polyest.sets import Ellitope, PolytopeImage, SignalSet


def box_signal(n, r1=2.0, r2=1.5, ri=1.0):
    return SignalSet(Ellitope.l2_linf(n, r2, ri), PolytopeImage.cross_polytope(n, r1))


def test_noiseless_observation_is_recovered(rng):
    signal = box_signal(4)
    A = random_matrix(4, 4, 10.0, rng)
    B = rng.standard_normal((3, 4))
    x0 = sample_signal(signal, rng)
    res = estimate(A @ x0, np.eye(4), signal, A, B)
    assert res.residual <= 1e-7
    assert np.allclose(res.x_hat, x0, atol=1e-6)
    assert np.allclose(res.w_hat, B @ x0, atol=1e-6)


def test_estimate_stays_in_signal_set(rng):
    signal = box_signal(3)
    est = PolyhedralEstimator(np.eye(3), signal, np.eye(3), np.eye(3))
    res = est(np.array([5.0, -4.0, 0.2]))
    assert signal.contains(res.x_hat, tol=1e-6)


def test_empty_contrast_is_rejected():
    with pytest.raises(ValueError):
        PolyhedralEstimator(ContrastMatrix.empty(3, 0.01), box_signal(3), np.eye(3), np.eye(3))
    with pytest.raises(DimensionError):
        PolyhedralEstimator(np.eye(2), box_signal(3), np.eye(3), np.eye(3))


def test_least_squares_baseline(rng):
    A = rng.standard_normal((4, 4))
    x = rng.standard_normal(4)
    assert np.allclose(least_squares_baseline(A @ x, A), x)
    Aw = rng.standard_normal((6, 3))
    assert np.allclose(least_squares_baseline(Aw @ x[:3], Aw), x[:3])


def test_empirical_quantile_rule():
    e = np.arange(1.0, 101.0)
    assert empirical_quantile(e, 0.01) == 99.0
    assert empirical_quantile(e, 0.05) == 95.0
    assert empirical_quantile(np.array([3.0]), 0.5) == 3.0
    assert math.isnan(empirical_quantile(np.array([]), 0.1))


def test_risk_report_fields():
    rep = RiskReport("H", np.array([0.1, 0.5, 2.0]), 1.0, 0.1, 2.0, np.array([True, True, True]))
    assert rep.exceed_fraction == pytest.approx(1 / 3)
    assert rep.coverage == pytest.approx(2 / 3)
    assert rep.implication_violations() == 1
    assert math.isnan(RiskReport("LS", np.ones(2), math.nan, 0.1, 2.0).exceed_fraction)


def test_trial_streams_are_independent_and_reproducible():
    a = trial_rng(3, 0).standard_normal(4)
    assert np.array_equal(a, trial_rng(3, 0).standard_normal(4))
    assert not np.array_equal(a, trial_rng(3, 1).standard_normal(4))


def test_sample_signal_lands_in_set(rng):
    signal = box_signal(5)
    for _ in range(20):
        assert signal.contains(sample_signal(signal, rng), tol=1e-7)
    simplex = SignalSet(Ellitope.l2_linf(4, 1.0, 0.5), PolytopeImage.cross_polytope(4), simplex=True)
    for _ in range(20):
        assert simplex.contains(sample_signal(simplex, rng), tol=1e-7)


@pytest.fixture(scope="module")
def small_experiment():
    rng = np.random.default_rng(31)
    n, sigma, delta = 6, 0.05, 0.01 / 12
    A = random_matrix(n, n, 100.0, rng)
    B = random_matrix(10, n, 8.0, rng)
    sol = solve_master_gaussian(A, B, 3.0, 2.5, 2.0, sigma, delta)
    problem = l1_ellitope_problem(A, B, 3.0, 2.5, 2.0, sigma, delta)
    H = assemble_contrast(sol, problem.noise, rng)
    return problem, sol, H, sigma


def test_monte_carlo_coverage_and_implication(small_experiment):
    problem, sol, H, sigma = small_experiment
    est = PolyhedralEstimator(H, problem.signal, problem.A, problem.B)
    eps = H.mu * problem.delta
    sampler = lambda x, r: sample_gaussian(x, problem.A, sigma, r)
    run = lambda: monte_carlo_risk(
        problem.signal, problem.A, problem.B, sampler,
        {"H": lambda om: est(om).x_hat, "LS": lambda om: least_squares_baseline(om, problem.A)},
        {"H": sol.bound}, 100, 2.0, eps, seed=4, contrasts={"H": H},
    )
    reports = run()
    rep = reports["H"]
    assert rep.exceed_fraction <= eps + 3 * math.sqrt(eps * (1 - eps) / 100)
    assert rep.implication_violations() == 0
    assert np.array_equal(rep.errors, run()["H"].errors)  # estimator reused across runs
    assert reports["LS"].errors.shape == (100,)


def test_monte_carlo_needs_trials(small_experiment):
    problem, *_ = small_experiment
    with pytest.raises(ValueError):
        monte_carlo_risk(problem.signal, problem.A, problem.B, None, {}, {}, 0, 2.0, 0.1, 0)


def test_p_bound_oracle_simple_cases(rng):
    signal = box_signal(3, r1=10.0, r2=1.0, ri=10.0)
    A = np.eye(3)
    none = np.zeros((3, 0))
    assert p_bound_oracle(np.zeros((3, 3)), "ellitope", none, A, signal, rng) == 0.0
    # max |x|^2 over the unit ball is 1
    assert p_bound_oracle(np.eye(3), "ellitope", none, A, signal, rng, budget=4) == pytest.approx(1.0, abs=1e-6)
    # a contrast e_1/0.5 caps |x_1| at 0.5
    V = np.diag([1.0, 0.0, 0.0])
    val = p_bound_oracle(V, "ellitope", 2.0 * np.eye(3)[:, :1], A, signal, rng, budget=4)
    assert val == pytest.approx(0.25, abs=1e-6)
    with pytest.raises(DimensionError):
        p_bound_oracle(np.eye(9), "ellitope", np.zeros((9, 0)), np.eye(9), box_signal(9), rng)
    with pytest.raises(ValueError):
        p_bound_oracle(np.eye(3), "other", none, A, signal, rng)


def test_p_bound_oracle_respects_design_bounds(small_experiment):
    problem, sol, H, _ = small_experiment
    rng = np.random.default_rng(2)
    prov = np.array(H.provenance)
    u = p_bound_oracle(sol.U, "ellitope", H.H[:, prov == "ellitope-side"], problem.A, problem.signal, rng)
    s = p_bound_oracle(sol.S, "symmetrized", H.H[:, prov == "polytope-side"], problem.A, problem.signal, rng)
    assert u <= sol.phi_T + sol.rho + 1e-6
    assert s <= sol.varsigma + 1e-6


def test_empty_signal_set_is_a_configuration_error():
    from polyest.errors import SolverError

    empty = SignalSet(Ellitope.l2_linf(3, 1.0, 0.1), PolytopeImage.cross_polytope(3), simplex=True)
    with pytest.raises(SolverError, match="empty"):
        PolyhedralEstimator(np.eye(3), empty, np.eye(3), np.eye(3))
