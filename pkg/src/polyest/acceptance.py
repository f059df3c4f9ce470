"""Acceptance checks with their tolerances and time limits.

Each ``criterion_*`` function returns a :class:`CriterionResult`; ``run_all``
prints one PASS/FAIL line per check.
"""
from __future__ import annotations

import filecmp
import math
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from polyest.cone import acceptance_rate, cone_check, extract_rank_one, kappa_const, min_cone_rho
from polyest.contrast import ELLITOPE_SIDE, POLYTOPE_SIDE
from polyest.design import (
    DesignProblem,
    assemble_contrast,
    dual_max_over_Ybar,
    l1_ellitope_problem,
    solve_master,
    solve_master_gaussian,
)
from polyest.estimator import p_bound_oracle
from polyest.experiments import (
    ExperimentConfig,
    emit_report,
    mixture_instance,
    mixture_problem,
    random_matrix,
    run_experiment,
    run_experiment_one,
    run_experiment_two,
)
from polyest.noise import MixtureModel, sample_mixture_batch, tail_bound
from polyest.sets import BasicEllitope, Ellitope, MonotoneSet, PolytopeImage, SignalSet


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    elapsed: float
    limit: float | None

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        lim = f" (limit {self.limit:.0f}s)" if self.limit else ""
        return f"[{tag}] {self.number:2d} {self.name}: {self.detail}; {self.elapsed:.1f}s{lim}"


def _timed(number: int, name: str, limit: float | None):
    def wrap(fn: Callable[..., tuple[bool, str]]):
        def run(*args, **kwargs) -> CriterionResult:
            t0 = time.perf_counter()
            ok, detail = fn(*args, **kwargs)
            elapsed = time.perf_counter() - t0
            within = limit is None or elapsed <= limit
            if not within:
                detail += " [time limit exceeded]"
            return CriterionResult(number, name, bool(ok and within), detail, elapsed, limit)

        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run

    return wrap


# --- random instances ----------------------------------------------------------------------


def random_psd(dim: int, rank: int, rng: np.random.Generator) -> np.ndarray:
    F = rng.standard_normal((dim, rank))
    return F @ F.T


def random_ball(M: int, L: int, rng: np.random.Generator) -> BasicEllitope:
    """Basic ellitope with random PSD ``S_l`` (the first full rank) and a random box."""
    mats = [random_psd(M, M, rng) / M]
    mats += [random_psd(M, int(rng.integers(1, M + 1)), rng) / M for _ in range(L - 1)]
    upper = rng.uniform(0.5, 2.0, size=L)
    return BasicEllitope(tuple(mats), MonotoneSet.box(upper))


def random_cone_member(ball: BasicEllitope, rng: np.random.Generator):
    """``Xi`` of random rank on the boundary of the cone (``rho`` minimal)."""
    M = ball.dim
    Xi = random_psd(M, int(rng.integers(1, M + 1)), rng)
    rho = min_cone_rho(ball, Xi)
    return cone_check(ball, Xi, rho)


def random_signal_set(rng: np.random.Generator, n_max: int = 6, K_max: int = 3, J_max: int = 4) -> SignalSet:
    n = int(rng.integers(2, n_max + 1))
    N = int(rng.integers(n, n_max + 1))
    K = int(rng.integers(1, K_max + 1))
    P = rng.standard_normal((n, N))
    T = [random_psd(N, N, rng) / N] + [random_psd(N, int(rng.integers(1, N + 1)), rng) / N for _ in range(K - 1)]
    ell = Ellitope(P, tuple(T), MonotoneSet.box(rng.uniform(0.5, 2.0, K)))
    q = int(rng.integers(1, n_max + 1))
    p = int(rng.integers(q, n_max + 1))
    J = int(rng.integers(1, J_max + 1))
    poly = PolytopeImage(rng.standard_normal((n, q)), rng.standard_normal((p, q)), rng.standard_normal((p, J)))
    return SignalSet(ell, poly)


def experiment_one_instance(n: int, rng: np.random.Generator, cond_A: float = 1e3, cond_B: float = 8.0):
    A = random_matrix(n, n, cond_A, rng)
    B = random_matrix(2 * n - 2, n, cond_B, rng)
    return A, B


# --- criteria --------------------------------------------------------------------------------


@_timed(1, "decomposition exactness", 30)
def criterion_1(seed: int = 1, count: int = 200):
    """Extraction returns weights summing to at most ``rho``, admissible columns and an exact reconstruction."""
    rng = np.random.default_rng(seed)
    worst_gauge, worst_rec, worst_sum, bad = 0.0, 0.0, -math.inf, 0
    for k in range(count):
        M = (2, 4, 8, 16)[k % 4]
        L = (1, 4, 8)[(k // 4) % 3]
        ball = random_ball(M, L, rng)
        member = random_cone_member(ball, rng)
        dec = extract_rank_one(member, ball, rng)
        gmax = float(np.max(ball.gauge(dec.vectors)))
        rec = float(np.linalg.norm(member.Xi - dec.reconstruct()) / np.linalg.norm(member.Xi))
        excess = float(dec.lambdas.sum() - member.rho)
        worst_gauge, worst_rec, worst_sum = max(worst_gauge, gmax), max(worst_rec, rec), max(worst_sum, excess)
        bad += not (excess <= 1e-12 * max(1.0, member.rho) and gmax <= 1 + 1e-8 and rec <= 1e-8)
    return bad == 0, f"{count} members, max gauge {worst_gauge:.12f}, max rel. reconstruction {worst_rec:.2e}, max sum(lambda)-rho {worst_sum:.2e}"


@_timed(2, "extraction acceptance probability", 60)
def criterion_2(seed: int = 2, trials: int = 400):
    """Per-trial acceptance of the random rotation is at least ``1/2 - 3 sqrt(0.25/trials)``."""
    rng = np.random.default_rng(seed)
    threshold = 0.5 - 3 * math.sqrt(0.25 / trials)
    rates = []
    for M, L in ((2, 1), (4, 4), (8, 8), (16, 1), (16, 8)):
        ball = random_ball(M, L, rng)
        member = random_cone_member(ball, rng)
        rates.append(acceptance_rate(member, ball, rng, trials))
    return min(rates) >= threshold, f"min rate {min(rates):.4f} over {len(rates)} members (threshold {threshold:.4f})"


@_timed(3, "forward cone direction", 10)
def criterion_3(seed: int = 3, count: int = 100):
    """``sum lambda_j g_j g_j'`` with admissible ``g_j`` is in the cone at ``rho = kappa sum(lambda)``."""
    rng = np.random.default_rng(seed)
    passed = 0
    for k in range(count):
        M = (2, 4, 8, 16)[k % 4]
        L = (1, 4, 8)[(k // 4) % 3]
        ball = random_ball(M, L, rng)
        r = int(rng.integers(1, 2 * M + 1))
        G = rng.standard_normal((M, r))
        G = G / ball.gauge(G) * rng.uniform(0.1, 1.0, r)
        lam = rng.uniform(0.0, 1.0, r)
        Xi = (G * lam) @ G.T
        passed += cone_check(ball, Xi, kappa_const(M, L) * lam.sum()) is not None
    return passed == count, f"{passed}/{count} mixtures certified"


@_timed(4, "conic duality of the support program", 120)
def criterion_4(seed: int = 4, count: int = 50):
    """Primal and dual values of ``max_{y in Ybar} d'y`` agree to ``1e-6 (1 + |value|)``."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(count):
        signal = random_signal_set(rng)
        d = rng.standard_normal(signal.polytope.p)
        primal, dual = dual_max_over_Ybar(d, signal)
        worst = max(worst, abs(primal - dual) / (1 + abs(primal)))
    return worst <= 1e-6, f"{count} instances, max relative gap {worst:.2e}"


@_timed(5, "design dominance", 600)
def criterion_5(seed: int = 5, count: int = 20):
    """Raw full-program optimum is at most either restricted optimum plus ``1e-6``."""
    rng = np.random.default_rng(seed)
    worst = -math.inf
    for k in range(count):
        if k % 2 == 0:
            A, B = experiment_one_instance(16, rng)
            delta = 0.01 / 32
            opt = {mode: solve_master_gaussian(A, B, 10.0, 8.5, 7.0, 0.01, delta, mode).objective
                   for mode in ("full", "ellitope-only", "polytope-only")}
        else:
            cfg = ExperimentConfig(kind="mixture", n=8, trials=0)
            model = mixture_instance(cfg, rng)
            problem = mixture_problem(model, cfg.rho2, cfg.rho_inf, 0.01 / 16)
            opt = {mode: solve_master(problem, mode).objective for mode in ("full", "ellitope-only", "polytope-only")}
        worst = max(worst, opt["full"] - min(opt["ellitope-only"], opt["polytope-only"]))
    return worst <= 1e-6, f"{count} instances, max Opt_full - min(Opt_E, Opt_P) = {worst:.3e}"


@_timed(6, "risk coverage", 900)
def criterion_6(seed: int = 6, trials: int = 300, epsilon: float = 0.01):
    """Fraction of trials above the certified bound is at most ``epsilon + 3 SE`` for H, E and P."""
    cfg = ExperimentConfig(n=16, trials=trials, seed=seed, epsilon=epsilon)
    record = run_experiment_one(cfg)
    limit = epsilon + 3 * math.sqrt(epsilon * (1 - epsilon) / trials)
    fr = {k: record.risk[k]["exceed_fraction"] for k in ("H", "E", "P")}
    ok = all(v <= limit for v in fr.values())
    parts = ", ".join(f"{k} {fr[k]:.4f} (bound {record.bounds[k]:.4f})" for k in fr)
    return ok, f"exceedance {parts}; limit {limit:.4f}"


def _small_design(k: int, rng: np.random.Generator):
    """Alternate Gaussian l1-ellitope instances and mixture instances with ``n <= 6``."""
    n = int(rng.integers(2, 7))
    if k % 2 == 0:
        A = random_matrix(n, n, 10.0, rng)
        B = random_matrix(n, n, 4.0, rng)
        problem = l1_ellitope_problem(A, B, 1.0, 0.9, 0.7, 0.1, 0.01 / (2 * n))
    else:
        d = n
        a = rng.standard_normal((d, n))
        a /= np.linalg.norm(a, axis=0)
        covs = []
        for _ in range(n):
            C = random_psd(d, d, rng)
            covs.append(C / np.linalg.norm(C, 2))
        problem = mixture_problem(MixtureModel(a, covs, 100), 1.0, 0.5, 0.01 / (2 * n))
    return problem


@_timed(7, "oracle sandwich", 300)
def criterion_7(seed: int = 7, count: int = 50):
    """Brute-force maxima of ``x'Ux`` and ``x'Sx`` stay below ``phi_T + rho`` and ``varsigma``."""
    rng = np.random.default_rng(seed)
    worst_u, worst_s = -math.inf, -math.inf
    for k in range(count):
        problem = _small_design(k, rng)
        sol = solve_master(problem, "full")
        contrast = assemble_contrast(sol, problem.noise, rng)
        prov = np.array(contrast.provenance)
        H1 = contrast.H[:, prov == ELLITOPE_SIDE]
        H2 = contrast.H[:, prov == POLYTOPE_SIDE]
        u = p_bound_oracle(sol.U, "ellitope", H1, problem.A, problem.signal, rng, budget=6, iters=6)
        s = p_bound_oracle(sol.S, "symmetrized", H2, problem.A, problem.signal, rng, budget=6, iters=6)
        bu, bs = sol.phi_T + sol.rho, sol.varsigma
        worst_u = max(worst_u, (u - bu) / (1 + abs(bu)))
        worst_s = max(worst_s, (s - bs) / (1 + abs(bs)))
    ok = worst_u <= 1e-6 and worst_s <= 1e-6
    return ok, f"{count} instances, max rel. excess U-part {worst_u:.3e}, S-part {worst_s:.3e}"


@_timed(8, "mixture tail bound", 120)
def criterion_8(seed: int = 8, draws: int = 100_000):
    """Empirical ``P{|h'xi| > tau}`` is below the sub-Gaussian tail bound plus ``3 SE``."""
    rng = np.random.default_rng(seed)
    n = d = 3
    a = rng.standard_normal((d, n))
    a /= np.linalg.norm(a, axis=0)
    covs = []
    for _ in range(n):
        C = random_psd(d, d, rng)
        covs.append(C / np.linalg.norm(C, 2))
    model = MixtureModel(a, covs, 100)
    x = rng.dirichlet(np.ones(n))
    h = rng.standard_normal(d)
    h /= np.linalg.norm(h)
    xi = sample_mixture_batch(model, x, draws, rng) - model.A @ x
    proj = np.abs(xi @ h)
    ok, parts = True, []
    for tau in (0.05, 0.1, 0.2):
        emp = float(np.mean(proj > tau))
        b = min(1.0, tail_bound(model, h, tau, x))
        limit = b + 3 * math.sqrt(b * (1 - b) / draws)
        ok &= emp <= limit
        parts.append(f"tau={tau}: {emp:.5f} <= {limit:.5f}")
    return ok, "; ".join(parts)


@_timed(9, "bound ordering in the mixture experiment", 600)
def criterion_9(seed: int = 9):
    """Certified bound of the full design is no larger than either restricted design's."""
    record = run_experiment_two(ExperimentConfig(kind="mixture", n=8, trials=0, seed=seed))
    b = record.bounds
    ok = b["H"] <= b["P"] and b["H"] <= b["E"]
    return ok, f"H {b['H']:.6f}, P {b['P']:.6f}, E {b['E']:.6f} (H from {record.designs['H']['source']})"


@_timed(10, "determinism", None)
def criterion_10(seed: int = 10):
    """Two runs with the same config and seed write byte-identical CSV files."""
    configs = [
        ExperimentConfig(n=6, trials=10, seed=seed),
        ExperimentConfig(kind="mixture", n=4, trials=10, seed=seed),
    ]
    mismatched, compared = [], 0
    with tempfile.TemporaryDirectory() as tmp:
        for cfg in configs:
            outs = []
            for rep in range(2):
                out = Path(tmp) / f"{cfg.kind}-{rep}"
                paths = emit_report(run_experiment(cfg), out, plots=False)
                outs.append(sorted(p for p in paths if p.suffix == ".csv"))
            for p, q in zip(*outs):
                compared += 1
                if not filecmp.cmp(p, q, shallow=False):
                    mismatched.append(p.name)
    return not mismatched, f"{compared} CSV pairs compared, mismatches: {mismatched or 'none'}"


CRITERIA = (
    criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
    criterion_6, criterion_7, criterion_8, criterion_9, criterion_10,
)


def run_all(select: list[int] | None = None, echo: Callable[[str], None] = print) -> list[CriterionResult]:
    results = []
    for k, fn in enumerate(CRITERIA, start=1):
        if select and k not in select:
            continue
        res = fn()
        echo(res.line())
        results.append(res)
    return results
