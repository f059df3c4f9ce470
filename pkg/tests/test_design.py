import math

import numpy as np
import pytest

from polyest.contrast import ELLITOPE_SIDE, POLYTOPE_SIDE
from polyest.design import (
    DesignProblem,
    assemble_contrast,
    certified_risk,
    check_solution,
    generator_values,
    l1_ellitope_problem,
    solve_master,
    solve_master_gaussian,
    theta_norm,
    theta_star,
)
from polyest.errors import DimensionError
from polyest.estimator import sample_signal
from polyest.experiments import mixture_problem, random_matrix
from polyest.noise import MixtureModel, gaussian_norm
from polyest.sets import Ellitope, MonotoneSet, PolytopeImage, SignalSet

MODES = ("full", "ellitope-only", "polytope-only")


def gaussian_instance(n, seed, scale=1.0):
    r = np.random.default_rng(seed)
    A = random_matrix(n, n, 50.0, r)
    B = random_matrix(2 * n - 2, n, 8.0, r)
    return A, B, 10.0 * scale, 8.5 * scale, 7.0 * scale


def mixture_instance(n, seed, N=1000):
    r = np.random.default_rng(seed)
    a = r.standard_normal((n, n))
    a /= np.linalg.norm(a, axis=0)
    covs = []
    for _ in range(n):
        F = r.standard_normal((n, n))
        covs.append(F @ F.T / np.linalg.norm(F @ F.T, 2))
    return MixtureModel(a, covs, N)


def ellitope_gauge(e: Ellitope, x):
    # P = I in every instance below
    return max(math.sqrt(max(x @ T @ x, 0.0) / t) for T, t in zip(e.T, e.domain.upper))


@pytest.fixture(scope="module")
def gaussian_design():
    A, B, r1, r2, ri = gaussian_instance(5, 11)
    problem = l1_ellitope_problem(A, B, r1, r2, ri, 0.05, 0.01 / 10)
    sols = {mode: solve_master(problem, mode) for mode in MODES}
    return problem, sols


@pytest.fixture(scope="module")
def mixture_design():
    model = mixture_instance(4, 12)
    problem = mixture_problem(model, 1.0, 0.5, 0.01 / 8)
    sols = {mode: solve_master(problem, mode) for mode in MODES}
    return problem, sols


def test_theta_helpers():
    assert theta_star(2.0) == math.inf
    assert theta_star(1.0) == 1.0
    assert theta_star(1.5) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        theta_star(2.5)
    assert theta_norm([3.0, -4.0], 2) == pytest.approx(5.0)
    assert theta_norm([3.0, -4.0], 1) == pytest.approx(7.0)


def test_zero_B_gives_zero_objective():
    A, _, r1, r2, ri = gaussian_instance(3, 1)
    problem = l1_ellitope_problem(A, np.zeros((2, 3)), r1, r2, ri, 0.1, 0.01)
    sol = solve_master(problem, "full")
    assert sol.objective == pytest.approx(0.0, abs=1e-7)
    assert sol.bound <= 1e-3


@pytest.mark.parametrize("fixture", ["gaussian_design", "mixture_design"])
def test_solutions_pass_independent_checks(fixture, request):
    problem, sols = request.getfixturevalue(fixture)
    for sol in sols.values():
        checks = check_solution(problem, sol)
        assert max(checks.values()) <= 1e-6, checks
        assert sol.bound == pytest.approx(2 * math.sqrt(sol.phi_T + sol.rho + sol.varsigma), rel=1e-12)
        assert sol.phi_T == pytest.approx(float(problem.signal.ellitope.domain.upper @ sol.gamma), abs=1e-9)


@pytest.mark.parametrize("fixture", ["gaussian_design", "mixture_design"])
def test_zeroing_lemma(fixture, request):
    _, sols = request.getfixturevalue(fixture)
    assert sols["full"].objective <= min(sols["ellitope-only"].objective, sols["polytope-only"].objective) + 1e-6
    assert np.allclose(sols["ellitope-only"].S, 0) and np.allclose(sols["ellitope-only"].g, 0)
    assert np.allclose(sols["polytope-only"].U, 0) and np.allclose(sols["polytope-only"].Theta, 0)


def test_zeroing_lemma_scaled_experiment_instance():
    A, B, r1, r2, ri = gaussian_instance(16, 3, scale=1.0)
    opt = {m: solve_master_gaussian(A, B, r1, r2, ri, 0.01, 0.01 / 32, m).objective for m in MODES}
    assert opt["full"] <= min(opt["ellitope-only"], opt["polytope-only"]) + 1e-6


@pytest.mark.parametrize("mode", MODES)
def test_gaussian_route_matches_general_route(mode):
    A, B, r1, r2, ri = gaussian_instance(5, 21)
    general = solve_master(l1_ellitope_problem(A, B, r1, r2, ri, 0.05, 0.001), mode).objective
    special = solve_master_gaussian(A, B, r1, r2, ri, 0.05, 0.001, mode).objective
    assert special == pytest.approx(general, rel=1e-5)


def test_mixture_objective_finite_nonnegative(mixture_design):
    _, sols = mixture_design
    for sol in sols.values():
        assert math.isfinite(sol.objective) and sol.objective >= 0
    assert sols["full"].kappa == pytest.approx(2 * math.sqrt(2) * math.log(4 * 16 * 10))


@pytest.mark.parametrize("fixture", ["gaussian_design", "mixture_design"])
def test_weak_duality_sandwich(fixture, request):
    problem, sols = request.getfixturevalue(fixture)
    for mode in ("full", "polytope-only"):
        vals = generator_values(problem, sols[mode])
        assert vals.max() <= sols[mode].varsigma + 1e-6


@pytest.mark.parametrize("fixture", ["gaussian_design", "mixture_design"])
def test_observation_and_ellitope_chain_by_sampling(fixture, request):
    problem, sols = request.getfixturevalue(fixture)
    sol = sols["full"]
    rng = np.random.default_rng(7)
    H = assemble_contrast(sol, problem.noise, rng)
    prov = np.array(H.provenance)
    HA = H.H.T @ problem.A
    H1A = H.H[:, prov == ELLITOPE_SIDE].T @ problem.A
    ell = problem.signal.ellitope
    W = sol.U + sol.S
    for _ in range(500):
        z = 0.5 * (sample_signal(problem.signal, rng) - sample_signal(problem.signal, rng))
        worst = float(np.abs(HA @ z).max(initial=0.0))
        if worst > 1:
            z /= worst
        lhs = theta_norm(problem.B @ z, sol.theta) ** 2
        assert lhs <= z @ W @ z + 1e-6
        assert z @ W @ z <= sol.radicand + 1e-6
    for _ in range(500):
        u = rng.standard_normal(problem.n)
        c = float(np.abs(H1A @ u).max(initial=0.0))
        x = u / max(ellitope_gauge(ell, u), c)
        assert x @ sol.U @ x <= sol.phi_T + sol.rho + 1e-6


def test_enlarging_signal_domain_does_not_decrease_objective():
    A, B, r1, r2, ri = gaussian_instance(4, 5)
    base = l1_ellitope_problem(A, B, r1, r2, ri, 0.05, 0.001)
    ell = base.signal.ellitope
    big = Ellitope(ell.P, ell.T, MonotoneSet.box(1.5 * ell.domain.upper))
    bigger = DesignProblem(SignalSet(big, base.signal.polytope), A, B, base.noise)
    assert solve_master(base).objective <= solve_master(bigger).objective + 1e-6


def test_objective_decreases_with_sigma():
    A = np.eye(4)
    vals = [solve_master_gaussian(A, np.eye(4), 2.0, 1.5, 1.0, s, 0.01, "full").objective for s in (0.3, 0.1, 0.01)]
    assert vals[0] >= vals[1] - 1e-7 >= vals[2] - 2e-7


def test_general_ellitope_and_polytope_with_theta_one():
    rng = np.random.default_rng(9)
    n = 4
    F = rng.standard_normal((n, n))
    T = (F @ F.T / n, np.eye(n) / 4.0)
    ell = Ellitope(np.eye(n), T, MonotoneSet.box([1.0, 2.0]))
    poly = PolytopeImage(np.eye(n), rng.standard_normal((5, n)), rng.standard_normal((5, 3)))
    problem = DesignProblem(SignalSet(ell, poly), rng.standard_normal((n, n)), np.eye(n),
                            gaussian_norm(0.1, 0.01, n), theta=1.0)
    sol = solve_master(problem, "full")
    assert max(check_solution(problem, sol).values()) <= 1e-6
    assert np.abs(sol.zeta).sum() <= 1 + 1e-6


def test_assembled_contrasts_are_admissible(mixture_design):
    problem, sols = mixture_design
    H = assemble_contrast(sols["full"], problem.noise, np.random.default_rng(1))
    assert np.all(np.asarray(problem.noise(H.H)) <= 1 + 1e-8)
    assert H.mu <= problem.M + problem.J
    eps, bound = certified_risk(sols["full"], H.count(ELLITOPE_SIDE), H.count(POLYTOPE_SIDE), problem.delta)
    assert eps == pytest.approx(H.mu * problem.delta)
    assert bound == sols["full"].bound


def test_validation():
    A, B, r1, r2, ri = gaussian_instance(3, 2)
    problem = l1_ellitope_problem(A, B, r1, r2, ri, 0.1, 0.01)
    with pytest.raises(ValueError):
        solve_master(problem, "both")
    with pytest.raises(DimensionError):
        DesignProblem(problem.signal, np.eye(4), B, problem.noise)
