"""Polyhedral estimate, baselines, Monte-Carlo risk and small-scale bound oracles."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

import cvxpy as cp
import numpy as np

from polyest.contrast import ContrastMatrix
from polyest.design import theta_norm
from polyest.errors import DimensionError, SamplerError, SolverError
from polyest.sets import SignalSet, ellitope_membership, polytope_membership
from polyest.solver import SolveInfo, SolverOptions


@dataclass
class EstimateResult:
    x_hat: np.ndarray
    w_hat: np.ndarray
    residual: float
    info: SolveInfo | None = None


def _columns(H) -> np.ndarray:
    return H.H if isinstance(H, ContrastMatrix) else np.atleast_2d(np.asarray(H, dtype=float))


class PolyhedralEstimator:
    """``x_hat(omega) in Argmin_{x in X} ||H'(A x - omega)||_inf`` and ``w_hat = B x_hat``.

    The conic program is compiled once, by a warm-up solve at construction;
    ``omega`` enters through a parameter, so repeated calls are reproducible.
    """

    def __init__(self, H, signal: SignalSet, A, B, options: SolverOptions | None = None):
        Hm = _columns(H)
        if Hm.shape[1] == 0:
            raise ValueError("polyhedral estimate needs at least one contrast column")
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.B = np.atleast_2d(np.asarray(B, dtype=float))
        if Hm.shape[0] != self.A.shape[0]:
            raise DimensionError(f"H has {Hm.shape[0]} rows, A has {self.A.shape[0]}")
        self.H = Hm
        self.options = options or SolverOptions()
        HA = Hm.T @ self.A
        self._x = cp.Variable(signal.n)
        self._t = cp.Variable()
        self._c = cp.Parameter(Hm.shape[1])
        cons = [HA @ self._x - self._c <= self._t, self._c - HA @ self._x <= self._t]
        cons += signal.cvx_constraints(self._x)
        self._prob = cp.Problem(cp.Minimize(self._t), cons)
        # compile now so every call takes the same cached path; this also
        # surfaces an empty signal set before any data is seen
        self(np.zeros(Hm.shape[0]))

    def __call__(self, omega) -> EstimateResult:
        omega = np.ravel(np.asarray(omega, dtype=float))
        self._c.value = self.H.T @ omega
        try:
            info = self.options.solve(self._prob, "polyhedral estimate")
        except SolverError as exc:
            if exc.status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
                raise SolverError("signal set is empty (configuration error)", exc.status) from exc
            raise
        x = np.asarray(self._x.value, dtype=float)
        res = float(np.abs(self.H.T @ (omega - self.A @ x)).max())
        return EstimateResult(x, self.B @ x, res, info)


def estimate(omega, H, X: SignalSet, A, B, options: SolverOptions | None = None) -> EstimateResult:
    return PolyhedralEstimator(H, X, A, B, options)(omega)


def least_squares_baseline(omega, A) -> np.ndarray:
    """``A^{-1} omega`` for square well-conditioned ``A``, else the minimum-norm least-squares solution."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    omega = np.ravel(np.asarray(omega, dtype=float))
    if A.shape[0] == A.shape[1] and np.linalg.cond(A) < 1e12:
        return np.linalg.solve(A, omega)
    return np.linalg.lstsq(A, omega, rcond=None)[0]


def sample_signal(signal: SignalSet, rng: np.random.Generator, max_rejections: int = 1000) -> np.ndarray:
    """Dirichlet-weighted combination of generators, rejected against the ellitope.

    Generators are ``+-R Q^+ v_j`` in general and the simplex vertices when
    ``X`` lives in the probability simplex.
    """
    if signal.simplex:
        gens = np.eye(signal.n)
    else:
        v = signal.polytope.vertices()
        gens = np.hstack([v, -v])
    for _ in range(max_rejections):
        x = gens @ rng.dirichlet(np.ones(gens.shape[1]))
        if not ellitope_membership(signal.ellitope, x, tol=1e-9):
            continue
        if signal.simplex and not polytope_membership(signal.polytope, x, tol=1e-9):
            continue
        return x
    raise SamplerError(f"no signal accepted after {max_rejections} draws")


def empirical_quantile(errors, epsilon: float) -> float:
    """Lower empirical ``(1 - epsilon)``-quantile: the ``ceil((1 - epsilon) T)``-th order statistic."""
    e = np.sort(np.asarray(errors, dtype=float))
    if e.size == 0:
        return math.nan
    k = max(1, math.ceil((1.0 - epsilon) * e.size))
    return float(e[min(k, e.size) - 1])


@dataclass
class RiskReport:
    name: str
    errors: np.ndarray
    bound: float
    epsilon: float
    theta: float
    noise_ok: np.ndarray | None = None

    @property
    def trials(self) -> int:
        return int(self.errors.size)

    @property
    def quantile(self) -> float:
        return empirical_quantile(self.errors, self.epsilon)

    @property
    def covered(self) -> np.ndarray:
        return self.errors <= self.bound

    @property
    def exceed_fraction(self) -> float:
        if not np.isfinite(self.bound) or self.trials == 0:
            return math.nan
        return float(np.mean(~self.covered))

    @property
    def coverage(self) -> float:
        return 1.0 - self.exceed_fraction

    def implication_violations(self, slack: float = 1e-6) -> int:
        """Trials with ``||H'xi||_inf <= 1`` whose error still exceeds the bound."""
        if self.noise_ok is None:
            return 0
        return int(np.sum(self.noise_ok & (self.errors > self.bound * (1 + slack) + slack)))


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent stream for one Monte-Carlo trial."""
    return np.random.default_rng([int(seed), int(trial)])


def monte_carlo_risk(
    signal: SignalSet,
    A,
    B,
    noise_sampler: Callable[[np.ndarray, np.random.Generator], np.ndarray],
    estimators: Mapping[str, Callable[[np.ndarray], np.ndarray]],
    bounds: Mapping[str, float],
    trials: int,
    theta: float,
    epsilon: float,
    seed: int,
    contrasts: Mapping[str, np.ndarray] | None = None,
    signal_sampler: Callable | None = None,
) -> dict[str, RiskReport]:
    """Paired simulation: every estimator sees the same ``(x, omega)`` in a trial.

    Trial ``t`` draws the signal and then the noise from ``trial_rng(seed, t)``.
    ``estimators`` map ``omega`` to ``x_hat``; errors are ``||B(x_hat - x)||_theta``.
    For names listed in ``contrasts`` the event ``||H'(omega - A x)||_inf <= 1`` is recorded.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    contrasts = dict(contrasts or {})
    sampler = signal_sampler or sample_signal
    errs = {k: np.zeros(trials) for k in estimators}
    ok = {k: np.zeros(trials, dtype=bool) for k in contrasts}
    for t in range(trials):
        rng = trial_rng(seed, t)
        x = sampler(signal, rng)
        omega = noise_sampler(x, rng)
        xi = omega - A @ x
        for name, est in estimators.items():
            errs[name][t] = theta_norm(B @ (np.asarray(est(omega)) - x), theta)
        for name, H in contrasts.items():
            ok[name][t] = float(np.abs(_columns(H).T @ xi).max(initial=0.0)) <= 1.0
    return {
        name: RiskReport(name, errs[name], float(bounds.get(name, math.nan)), epsilon, theta, ok.get(name))
        for name in estimators
    }


def p_bound_oracle(
    V,
    which: str,
    G,
    A,
    signal: SignalSet,
    rng: np.random.Generator,
    budget: int = 16,
    iters: int = 12,
    options: SolverOptions | None = None,
) -> float:
    """Lower estimate of ``max{x'Vx : x in Xi, ||G'Ax||_inf <= 1}`` for small ``n``.

    ``which`` is ``"ellitope"`` (the ellitope alone) or ``"symmetrized"`` (the
    ellitope intersected with the polytope image, an outer description of the
    symmetrized signal set).  Restarts begin at extreme points in the directions
    of the polytope vertices, the top eigenvectors of ``V`` and random directions;
    each is refined by linearized ascent with projected-gradient fallback steps.
    Every evaluated point is feasible, so the value is a valid lower bound.
    """
    V = np.asarray(V, dtype=float)
    n = signal.n
    if n > 8:
        raise DimensionError("p_bound_oracle is a brute-force check for n <= 8")
    if which not in ("ellitope", "symmetrized"):
        raise ValueError("which must be 'ellitope' or 'symmetrized'")
    V = 0.5 * (V + V.T)
    if not np.any(V):
        return 0.0
    options = options or SolverOptions(extra={"tol_feas": 1e-9, "tol_gap_abs": 1e-9, "tol_gap_rel": 1e-9})
    GA = _columns(G).T @ np.atleast_2d(A)

    def feasible(x):
        cons = list(signal.ellitope.cvx_constraints(x))
        if which == "symmetrized":
            cons += signal.polytope.cvx_constraints(x)
        if GA.shape[0]:
            cons.append(cp.abs(GA @ x) <= 1)
        return cons

    x = cp.Variable(n)
    c = cp.Parameter(n)
    lin = cp.Problem(cp.Maximize(c @ x), feasible(x))
    y = cp.Variable(n)
    target = cp.Parameter(n)
    proj = cp.Problem(cp.Minimize(cp.sum_squares(y - target)), feasible(y))

    def argmax_linear(direction):
        c.value = direction
        options.solve(lin, "oracle linear step")
        return np.asarray(x.value, dtype=float)

    def project(point):
        target.value = point
        options.solve(proj, "oracle projection")
        return np.asarray(y.value, dtype=float)

    f = lambda u: float(u @ V @ u)
    w, vecs = np.linalg.eigh(V)
    starts = [vecs[:, -1], -vecs[:, -1]]
    if which == "symmetrized":
        starts += list(signal.polytope.vertices().T)
    while len(starts) < budget:
        starts.append(rng.standard_normal(n))
    step = 0.5 / max(np.abs(w).max(), 1e-12)
    best = 0.0
    for s in starts[:max(budget, 2)]:
        if not np.any(s):
            continue
        cur = argmax_linear(s)
        val = f(cur)
        for _ in range(iters):
            grad = 2.0 * V @ cur
            if not np.any(grad):
                break
            cand = argmax_linear(grad)
            cval = f(cand)
            if cval <= val + 1e-12 * max(1.0, abs(val)):
                cand = project(cur + step * grad)
                cval = f(cand)
                if cval <= val + 1e-12 * max(1.0, abs(val)):
                    break
            cur, val = cand, cval
        best = max(best, val)
    return best
