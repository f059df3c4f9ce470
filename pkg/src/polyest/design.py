"""Contrast design programs.

The master program minimizes ``phi_T(gamma) + rho + varsigma`` where

* ``[[U + S, B'], [B, Diag(zeta)]] >= 0`` and ``||zeta||_{theta*} <= 1`` split the
  loss ``||Bx||_theta^2`` into an ellitope part ``x'Ux`` and a polytope part ``x'Sx``;
* ``(Theta, rho)`` lies in the admissible-decomposition cone and
  ``P'UP <= P'A'Theta A P + sum_k gamma_k T_k`` bounds the ellitope part;
* for every generator ``v_j`` the maximum of
  ``[v_j' Sbar[S] - g_j' A R Q^+] y`` over the outer description of the
  polytope-side set, written through its conic dual, plus ``pi_delta(g_j)`` is at
  most ``varsigma``.

The feasible solution converts into a contrast matrix ``H = [H1, H2]`` with
risk bound ``2 sqrt(phi_T(gamma) + rho + varsigma)`` at level ``(M + J) delta``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from polyest.cone import ConeMember, cone_check, extract_rank_one, kappa_const, lift_to_contrasts, min_cone_rho
from polyest.contrast import ELLITOPE_SIDE, POLYTOPE_SIDE, ContrastMatrix
from polyest.errors import DimensionError, SolverError
from polyest.noise import NoiseNorm, gaussian_norm, normal_quantile
from polyest.sets import Ellitope, PolytopeImage, SignalSet, min_eig, psd_constraint, symmetrize
from polyest.solver import SolveInfo, SolverOptions

MODES = ("full", "ellitope-only", "polytope-only")
LMI_EPS = 1e-9


class DesignError(SolverError):
    """Post-solve verification of a design failed."""


def theta_star(theta: float) -> float:
    if not 1.0 <= theta <= 2.0:
        raise ValueError(f"theta must lie in [1, 2], got {theta}")
    return math.inf if theta == 2.0 else theta / (2.0 - theta)


def theta_norm(u, theta: float) -> float:
    return float(np.linalg.norm(np.ravel(u), ord=theta))


def _zeta_norm(zeta, theta: float):
    ts = theta_star(theta)
    if math.isinf(ts):
        return cp.norm(zeta, "inf")
    if ts == 1.0:
        return cp.norm(zeta, 1)
    return cp.pnorm(zeta, ts)


@dataclass(eq=False)
class DesignProblem:
    signal: SignalSet
    A: np.ndarray
    B: np.ndarray
    noise: NoiseNorm
    theta: float = 2.0

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.B = np.atleast_2d(np.asarray(self.B, dtype=float))
        n = self.signal.n
        if self.A.shape != (self.noise.m, n):
            raise DimensionError(f"A has shape {self.A.shape}, expected ({self.noise.m}, {n})")
        if self.B.shape[1] != n:
            raise DimensionError(f"B has {self.B.shape[1]} columns, expected {n}")
        theta_star(self.theta)

    @property
    def n(self) -> int:
        return self.signal.n

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def nu(self) -> int:
        return self.B.shape[0]

    @property
    def delta(self) -> float:
        return self.noise.delta

    @property
    def M(self) -> int:
        return self.noise.M

    @property
    def J(self) -> int:
        return self.signal.polytope.J

    @property
    def kappa(self) -> float:
        # spherical noise balls decompose exactly through the eigenvectors of Theta
        if self.noise.kind == "euclidean-ball":
            return 1.0
        return kappa_const(self.noise.M, self.noise.L)


@dataclass(eq=False)
class DesignSolution:
    mode: str
    Theta: np.ndarray
    Xi: np.ndarray
    zeta: np.ndarray
    rho: float
    varsigma: float
    gamma: np.ndarray
    U: np.ndarray
    S: np.ndarray
    g: np.ndarray  # m x J, column j is g_j
    duals: dict
    phi_T: float
    kappa: float
    theta: float
    delta: float
    info: SolveInfo | None = None
    checks: dict = field(default_factory=dict)

    @property
    def radicand(self) -> float:
        return self.phi_T + self.rho + self.varsigma

    @property
    def objective(self) -> float:
        return self.radicand

    @property
    def bound(self) -> float:
        return 2.0 * math.sqrt(max(self.radicand, 0.0))


def _polytope_side_lhs(problem: DesignProblem, S, g, beta, phi, psi) -> np.ndarray:
    """Numeric left-hand sides of the per-generator constraints (length J)."""
    ell, poly = problem.signal.ellitope, problem.signal.polytope
    up = ell.domain.require_box("design")
    W = poly.lift
    D = W.T @ S @ W @ poly.V - W.T @ problem.A.T @ g - beta
    t1 = np.abs(poly.V.T @ D).max(axis=0)
    t2 = (psi - phi).sum(axis=0)
    t3 = up @ np.clip(phi + psi, 0.0, None)
    t4 = np.atleast_1d(problem.noise(g)) if g.shape[1] else np.zeros(0)
    return t1 + t2 + t3 + t4


def check_solution(problem: DesignProblem, sol: DesignSolution) -> dict:
    """Re-evaluate every constraint of the master program; positive entries are violations."""
    ell, poly, noise = problem.signal.ellitope, problem.signal.polytope, problem.noise
    B = problem.B
    out = {}
    blk = np.block([[sol.U + sol.S, B.T], [B, np.diag(sol.zeta + LMI_EPS)]])
    out["lmi"] = -min_eig(blk) / max(1.0, np.linalg.norm(blk, 2))
    ts = theta_star(sol.theta)
    out["zeta_norm"] = float(np.linalg.norm(sol.zeta, ord=ts)) - 1.0
    out["gamma_nonneg"] = float(max(0.0, -sol.gamma.min(initial=0.0)))
    if sol.mode != "polytope-only":
        out["xi_psd"] = -min_eig(sol.Xi) / max(1.0, np.linalg.norm(sol.Xi, 2))
        up = noise.domain.require_box("cone check")
        tr = np.array([np.sum(sol.Xi * Sl) for Sl in noise.S_ell])
        out["cone"] = float(np.max(tr - (sol.rho / sol.kappa) * up)) / max(1.0, sol.rho)
        P, A = ell.P, problem.A
        lhs = P.T @ A.T @ sol.Theta @ A @ P + sum(gk * Tk for gk, Tk in zip(sol.gamma, ell.T)) - P.T @ sol.U @ P
        out["ellitope_lmi"] = -min_eig(lhs) / max(1.0, np.linalg.norm(lhs, 2))
    if sol.mode != "ellitope-only":
        d = sol.duals
        out["dual_eq_beta"] = float(np.abs(poly.R.T @ d["eta"] - poly.Q.T @ d["beta"]).max(initial=0.0))
        acc = ell.P.T @ d["eta"]
        for k, Ek in enumerate(ell.E):
            acc = acc + Ek.T @ d["eps"][k]
        out["dual_eq_eta"] = float(np.abs(acc).max(initial=0.0))
        soc = np.sqrt((d["eps"] ** 2).sum(axis=1) + d["phi"] ** 2) - d["psi"]
        out["soc"] = float(soc.max(initial=-np.inf))
        lhs = _polytope_lhs_full(problem, sol)
        out["polytope_side"] = float((lhs - sol.varsigma).max(initial=-np.inf)) / max(1.0, sol.varsigma)
    if sol.info is not None:
        out["objective"] = abs(sol.info.value - sol.radicand) / max(1.0, abs(sol.radicand))
    return out


def _polytope_lhs_full(problem: DesignProblem, sol: DesignSolution) -> np.ndarray:
    d = sol.duals
    return _polytope_side_lhs(problem, sol.S, sol.g, d["beta"], d["phi"], d["psi"])


def _assert_checks(checks: dict, tol: float, what: str) -> None:
    bad = {k: v for k, v in checks.items() if v > tol}
    if bad:
        raise DesignError(f"{what}: post-solve verification failed: {bad}", "verification", checks)


def solve_master(problem: DesignProblem, mode: str = "full", options: SolverOptions | None = None) -> DesignSolution:
    """Build and solve the master design program.

    ``mode`` restricts the program: ``ellitope-only`` forces ``S = 0`` and
    ``g_j = 0``, ``polytope-only`` forces ``U = 0``, ``Theta = 0``, ``gamma = 0``.
    Both restrictions are feasible sub-programs of ``full``.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    options = options or SolverOptions()
    ell, poly, noise = problem.signal.ellitope, problem.signal.polytope, problem.noise
    T_up = ell.domain.require_box("master program")
    S_up = noise.domain.require_box("master program")
    n, m, nu, K, J, p = problem.n, problem.m, problem.nu, ell.K, poly.J, poly.p
    A, B = problem.A, problem.B
    use_ell = mode != "polytope-only"
    use_poly = mode != "ellitope-only"

    U = cp.Variable((n, n), symmetric=True) if use_ell else np.zeros((n, n))
    S = cp.Variable((n, n), symmetric=True) if use_poly else np.zeros((n, n))
    zeta = cp.Variable(nu)
    cons = [psd_constraint(cp.bmat([[U + S, B.T], [B, cp.diag(zeta)]])), _zeta_norm(zeta, problem.theta) <= 1]
    objective = 0

    kappa = problem.kappa
    if use_ell:
        Xi = cp.Variable((noise.M, noise.M), symmetric=True)
        rho = cp.Variable(nonneg=True)
        gamma = cp.Variable(K, nonneg=True)
        cons.append(Xi >> 0)
        for Sl, sl in zip(noise.S_ell, S_up):
            cons.append(cp.sum(cp.multiply(Sl, Xi)) <= rho * (sl / kappa))
        Sd = noise.S_delta
        Theta = Sd @ Xi @ Sd.T
        P = ell.P
        rhs = P.T @ A.T @ Theta @ A @ P + sum(gamma[k] * ell.T[k] for k in range(K)) - P.T @ U @ P
        cons.append(psd_constraint(rhs))
        objective = objective + T_up @ gamma + rho

    if use_poly:
        W = poly.lift
        G = cp.Variable((m, J))
        Beta = cp.Variable((p, J))
        Eta = cp.Variable((n, J))
        Phi = cp.Variable((K, J))
        Psi = cp.Variable((K, J))
        # reduced E_k = 2 F_k' with T_k = F_k F_k'; E_k' E_k matches the full square root
        Eps = [cp.Variable((f.shape[1], J)) if f.shape[1] else None for f in ell.factors]
        varsigma = cp.Variable()
        D = W.T @ S @ W @ poly.V - W.T @ A.T @ G - Beta
        lhs = (
            cp.max(cp.abs(poly.V.T @ D), axis=0)
            + cp.sum(Psi - Phi, axis=0)
            + T_up @ cp.pos(Phi + Psi)
        )
        pi_expr, pi_cons = noise.cvx_expr(G)
        cons += pi_cons
        cons.append(lhs + pi_expr <= varsigma)
        cons.append(poly.R.T @ Eta - poly.Q.T @ Beta == 0)
        acc = ell.P.T @ Eta
        for k, f in enumerate(ell.factors):
            if Eps[k] is None:
                cons.append(cp.abs(Phi[k, :]) <= Psi[k, :])
                continue
            acc = acc + 2.0 * f @ Eps[k]
            cons.append(cp.SOC(Psi[k, :], cp.vstack([Eps[k], Phi[k:k + 1, :]]), axis=0))
        cons.append(acc == 0)
        objective = objective + varsigma

    prob = cp.Problem(cp.Minimize(objective), cons)
    info = options.solve(prob, f"master program ({mode})")

    zeros_n = np.zeros((n, n))
    sol = DesignSolution(
        mode=mode,
        Theta=symmetrize(Theta.value) if use_ell else np.zeros((m, m)),
        Xi=symmetrize(Xi.value) if use_ell else np.zeros((noise.M, noise.M)),
        zeta=np.asarray(zeta.value, dtype=float),
        rho=float(rho.value) if use_ell else 0.0,
        varsigma=float(varsigma.value) if use_poly else 0.0,
        gamma=np.clip(np.asarray(gamma.value), 0.0, None) if use_ell else np.zeros(K),
        U=symmetrize(U.value) if use_ell else zeros_n,
        S=symmetrize(S.value) if use_poly else zeros_n,
        g=np.asarray(G.value) if use_poly else np.zeros((m, J)),
        duals={},
        phi_T=0.0,
        kappa=kappa,
        theta=problem.theta,
        delta=problem.delta,
        info=info,
    )
    if use_poly:
        eps_full = np.zeros((K, ell.N, J))
        for k, f in enumerate(ell.factors):
            if Eps[k] is not None:
                # express the reduced multiplier in the coordinates of E_k = 2 T_k^{1/2}
                basis = f / np.linalg.norm(f, axis=0)
                eps_full[k] = basis @ Eps[k].value
        sol.duals = {
            "beta": np.asarray(Beta.value),
            "eta": np.asarray(Eta.value),
            "eps": eps_full,
            "phi": np.asarray(Phi.value),
            "psi": np.asarray(Psi.value),
        }
    _finalize(problem, sol, options)
    return sol


def _finalize(problem: DesignProblem, sol: DesignSolution, options: SolverOptions) -> None:
    """Make the certificate self-consistent, then verify every constraint.

    ``rho`` is raised to the exact cone threshold of the returned ``Xi`` and
    ``varsigma`` to the recomputed per-generator maximum; both moves are of the
    order of the solver tolerance and only loosen the bound.
    """
    T_up = problem.signal.ellitope.domain.require_box("design")
    sol.phi_T = float(T_up @ sol.gamma)
    if sol.mode != "polytope-only":
        sol.rho = max(sol.rho, min_cone_rho(problem.noise.ball, sol.Xi, sol.kappa))
    if sol.mode != "ellitope-only":
        sol.varsigma = max(sol.varsigma, float(_polytope_lhs_full(problem, sol).max()))
    sol.checks = check_solution(problem, sol)
    _assert_checks(sol.checks, options.verify_tol, f"design ({sol.mode})")


# --- spherical noise with the l1 / l2 / l_inf signal set ---------------------------------


def l1_ellitope_problem(A, B, rho1: float, rho2: float, rho_inf: float, sigma: float, delta: float) -> DesignProblem:
    """Signal set ``{||x||_1 <= rho1, ||x||_2 <= rho2, ||x||_inf <= rho_inf}`` with N(0, sigma^2 I) noise."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[1]
    signal = SignalSet(Ellitope.l2_linf(n, rho2, rho_inf), PolytopeImage.cross_polytope(n, rho1))
    return DesignProblem(signal, A, B, gaussian_norm(sigma, delta, A.shape[0]), theta=2.0)


def solve_master_gaussian(
    A,
    B,
    rho1: float,
    rho2: float,
    rho_inf: float,
    sigma: float,
    delta: float,
    mode: str = "full",
    options: SolverOptions | None = None,
) -> DesignSolution:
    """Specialized program for spherical Gaussian noise, ``theta = 2`` and the ``l1 ∩ l2 ∩ l_inf`` set.

    The observation cost is ``sigma^2 chi^2 Tr(Theta)`` (exact eigen-decomposition,
    no relaxation factor); the polytope side uses split multipliers
    ``alpha_j`` (``l_inf`` part) and ``beta_j`` (``l2`` part).
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    options = options or SolverOptions()
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    m, n = A.shape
    chi = normal_quantile(1.0 - delta / 2.0)
    use_ell = mode != "polytope-only"
    use_poly = mode != "ellitope-only"

    U = cp.Variable((n, n), symmetric=True) if use_ell else np.zeros((n, n))
    S = cp.Variable((n, n), symmetric=True) if use_poly else np.zeros((n, n))
    cons = [psd_constraint(U + S - B.T @ B)]
    objective = 0
    if use_ell:
        Theta = cp.Variable((m, m), symmetric=True)
        gamma = cp.Variable(n + 1, nonneg=True)
        cons += [
            Theta >> 0,
            psd_constraint(A.T @ Theta @ A + gamma[0] / rho2**2 * np.eye(n) + cp.diag(gamma[1:]) / rho_inf**2 - U),
        ]
        objective = objective + cp.sum(gamma) + sigma**2 * chi**2 * cp.trace(Theta)
    if use_poly:
        G = cp.Variable((m, n))
        alpha = cp.Variable((n, n))
        beta = cp.Variable((n, n))
        varsigma = cp.Variable()
        lhs = (
            rho1 * cp.max(cp.abs(rho1 * S - A.T @ G - alpha - beta), axis=0)
            + rho_inf * cp.norm(alpha, 1, axis=0)
            + rho2 * cp.norm(beta, 2, axis=0)
            + sigma * chi * cp.norm(G, 2, axis=0)
        )
        cons.append(lhs <= varsigma)
        objective = objective + varsigma

    prob = cp.Problem(cp.Minimize(objective), cons)
    info = options.solve(prob, f"gaussian master program ({mode})")

    th = symmetrize(Theta.value) if use_ell else np.zeros((m, m))
    sol = DesignSolution(
        mode=mode,
        Theta=th,
        Xi=th,
        zeta=np.ones(B.shape[0]),
        rho=float(sigma**2 * chi**2 * np.trace(th)),
        varsigma=float(varsigma.value) if use_poly else 0.0,
        gamma=np.clip(np.asarray(gamma.value), 0.0, None) if use_ell else np.zeros(n + 1),
        U=symmetrize(U.value) if use_ell else np.zeros((n, n)),
        S=symmetrize(S.value) if use_poly else np.zeros((n, n)),
        g=np.asarray(G.value) if use_poly else np.zeros((m, n)),
        duals={"alpha": np.asarray(alpha.value), "beta": np.asarray(beta.value)} if use_poly else {},
        phi_T=0.0,
        kappa=1.0,
        theta=2.0,
        delta=float(delta),
        info=info,
    )
    sol.phi_T = float(sol.gamma.sum())
    if use_poly:
        sol.varsigma = max(sol.varsigma, float(_gaussian_lhs(sol, A, rho1, rho2, rho_inf, sigma * chi).max()))
    sol.checks = _check_gaussian(sol, A, B, rho1, rho2, rho_inf, sigma * chi)
    _assert_checks(sol.checks, options.verify_tol, f"gaussian design ({mode})")
    return sol


def _gaussian_lhs(sol, A, rho1, rho2, rho_inf, scale) -> np.ndarray:
    al, be = sol.duals["alpha"], sol.duals["beta"]
    return (
        rho1 * np.abs(rho1 * sol.S - A.T @ sol.g - al - be).max(axis=0)
        + rho_inf * np.abs(al).sum(axis=0)
        + rho2 * np.linalg.norm(be, axis=0)
        + scale * np.linalg.norm(sol.g, axis=0)
    )


def _check_gaussian(sol, A, B, rho1, rho2, rho_inf, scale) -> dict:
    n = A.shape[1]
    out = {}
    blk = sol.U + sol.S - B.T @ B
    out["lmi"] = -min_eig(blk) / max(1.0, np.linalg.norm(blk, 2))
    out["gamma_nonneg"] = float(max(0.0, -sol.gamma.min()))
    if sol.mode != "polytope-only":
        out["theta_psd"] = -min_eig(sol.Theta) / max(1.0, np.linalg.norm(sol.Theta, 2))
        lhs = A.T @ sol.Theta @ A + sol.gamma[0] / rho2**2 * np.eye(n) + np.diag(sol.gamma[1:]) / rho_inf**2 - sol.U
        out["ellitope_lmi"] = -min_eig(lhs) / max(1.0, np.linalg.norm(lhs, 2))
    if sol.mode != "ellitope-only":
        lhs = _gaussian_lhs(sol, A, rho1, rho2, rho_inf, scale)
        out["polytope_side"] = float((lhs - sol.varsigma).max()) / max(1.0, sol.varsigma)
    if sol.info is not None:
        out["objective"] = abs(sol.info.value - sol.radicand) / max(1.0, abs(sol.radicand))
    return out


# --- contrast assembly -----------------------------------------------------------------


def assemble_ellitope_contrast(
    sol: DesignSolution, noise: NoiseNorm, rng: np.random.Generator, max_trials: int = 64
) -> ContrastMatrix:
    """Turn ``Theta`` into admissible columns ``H1`` with weights summing to at most ``rho``.

    Spherical noise uses the eigenvectors of ``Theta`` scaled to unit norm;
    otherwise the randomized rotation of ``Xi^{1/2}`` is used and lifted by ``S_delta``.
    """
    if sol.mode == "polytope-only" or not np.any(sol.Theta):
        return ContrastMatrix.empty(noise.m, noise.delta)
    if noise.kind == "euclidean-ball":
        w, vecs = np.linalg.eigh(sol.Theta)
        keep = w > 1e-12 * max(float(w.max()), 0.0)
        if not keep.any():
            return ContrastMatrix.empty(noise.m, noise.delta)
        u = vecs[:, keep]
        pis = np.atleast_1d(noise(u))
        return ContrastMatrix(u / pis, (ELLITOPE_SIDE,) * u.shape[1], noise.delta, w[keep] * pis**2)
    member = cone_check(noise.ball, sol.Xi, sol.rho, kappa=sol.kappa)
    if member is None:
        member = ConeMember(sol.Xi, min_cone_rho(noise.ball, sol.Xi, sol.kappa), noise.domain.upper, sol.kappa)
    dec = extract_rank_one(member, noise.ball, rng, max_trials=max_trials)
    return lift_to_contrasts(dec, noise.S_delta, noise.delta)


def assemble_polytope_contrast(sol: DesignSolution, noise: NoiseNorm, zero_tol: float = 1e-12) -> ContrastMatrix:
    """``h_j = g_j / pi(g_j)``; generators with ``pi(g_j) <= zero_tol`` need no contrast."""
    if sol.mode == "ellitope-only" or sol.g.shape[1] == 0:
        return ContrastMatrix.empty(noise.m, noise.delta)
    pis = np.atleast_1d(noise(sol.g))
    keep = pis > zero_tol
    H = sol.g[:, keep] / pis[keep]
    return ContrastMatrix(H, (POLYTOPE_SIDE,) * H.shape[1], noise.delta)


def assemble_contrast(sol: DesignSolution, noise: NoiseNorm, rng: np.random.Generator) -> ContrastMatrix:
    return (assemble_ellitope_contrast(sol, noise, rng) + assemble_polytope_contrast(sol, noise)).pruned(noise)


def certified_risk(sol: DesignSolution, M_cols: int, J_cols: int, delta: float) -> tuple[float, float]:
    """``(epsilon, bound)`` with ``epsilon = (M_cols + J_cols) delta`` and ``bound = 2 sqrt(phi_T + rho + varsigma)``."""
    return (M_cols + J_cols) * delta, sol.bound


# --- maximization over the outer polytope-side set ---------------------------------------


def ybar_primal(d, ell: Ellitope, poly: PolytopeImage, options: SolverOptions | None = None) -> float:
    """``max d'y`` over ``y = V lam, ||lam||_1 <= 1, y = Q w, R w = P z`` with ``z`` in the ellitope.

    The quadratic constraints are written as Lorentz-cone memberships
    ``[E_k z; t_k - 1; t_k + 1]`` with ``E_k = 2 T_k^{1/2}``.
    """
    options = options or SolverOptions()
    d = np.ravel(np.asarray(d, dtype=float))
    up = ell.domain.require_box("primal support program")
    y, lam = cp.Variable(poly.p), cp.Variable(poly.J)
    w, z, t = cp.Variable(poly.q), cp.Variable(ell.N), cp.Variable(ell.K)
    cons = [y == poly.V @ lam, y == poly.Q @ w, poly.R @ w == ell.P @ z, cp.norm(lam, 1) <= 1, t >= 0, t <= up]
    for k, Ek in enumerate(ell.E):
        cons.append(cp.SOC(t[k] + 1, cp.hstack([Ek @ z, t[k] - 1])))
    prob = cp.Problem(cp.Maximize(d @ y), cons)
    return options.solve(prob, "primal support program").value


def ybar_dual(d, ell: Ellitope, poly: PolytopeImage, options: SolverOptions | None = None) -> float:
    """Conic dual of :func:`ybar_primal`:

    ``min ||V'(d - beta)||_inf + sum_k (psi_k - phi_k) + phi_T(phi + psi)`` subject to
    ``R'eta = Q'beta``, ``sum_k E_k' eps_k + P'eta = 0``, ``psi_k >= ||[eps_k; phi_k]||``.
    """
    options = options or SolverOptions()
    d = np.ravel(np.asarray(d, dtype=float))
    up = ell.domain.require_box("dual support program")
    beta, eta = cp.Variable(poly.p), cp.Variable(poly.n)
    eps = cp.Variable((ell.K, ell.N))
    phi, psi = cp.Variable(ell.K), cp.Variable(ell.K)
    acc = ell.P.T @ eta
    cons = [poly.R.T @ eta == poly.Q.T @ beta]
    for k, Ek in enumerate(ell.E):
        acc = acc + Ek.T @ eps[k]
        cons.append(cp.SOC(psi[k], cp.hstack([eps[k], phi[k]])))
    cons.append(acc == 0)
    obj = cp.norm(poly.V.T @ (d - beta), "inf") + cp.sum(psi - phi) + up @ cp.pos(phi + psi)
    prob = cp.Problem(cp.Minimize(obj), cons)
    return options.solve(prob, "dual support program").value


def dual_max_over_Ybar(d, signal: SignalSet, options: SolverOptions | None = None) -> tuple[float, float]:
    """``(primal, dual)`` values of ``max_{y in Ybar} d'y``; they agree by conic duality."""
    d = np.ravel(np.asarray(d, dtype=float))
    if d.shape != (signal.polytope.p,):
        raise DimensionError(f"d has length {d.size}, expected {signal.polytope.p}")
    return ybar_primal(d, signal.ellitope, signal.polytope, options), ybar_dual(d, signal.ellitope, signal.polytope, options)


def generator_values(problem: DesignProblem, sol: DesignSolution, options: SolverOptions | None = None) -> np.ndarray:
    """``max_{y in Ybar} [v_j' Sbar[S] - g_j' A R Q^+] y + pi(g_j)`` for each ``j`` via the primal program."""
    poly, ell = problem.signal.polytope, problem.signal.ellitope
    W = poly.lift
    out = np.zeros(poly.J)
    for j in range(poly.J):
        d = W.T @ sol.S @ W @ poly.V[:, j] - W.T @ problem.A.T @ sol.g[:, j]
        out[j] = ybar_primal(d, ell, poly, options) + float(problem.noise(sol.g[:, j]))
    return out
