"""Noise norms with ellitopic unit balls and observation samplers."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import NormalDist

import cvxpy as cp
import numpy as np

from polyest.errors import DimensionError, SolverError
from polyest.sets import BasicEllitope, MonotoneSet, _readonly, min_eig, psd_factor, symmetrize


def normal_quantile(p: float) -> float:
    """Standard normal ``p``-quantile.

    ``statistics.NormalDist.inv_cdf`` implements Wichura's AS241 rational
    approximation (relative error around 1e-16).
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"quantile level must lie in (0, 1), got {p}")
    return NormalDist().inv_cdf(p)


def _check_delta(delta: float) -> float:
    delta = float(delta)
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    return delta


@dataclass(frozen=True, eq=False)
class NoiseNorm:
    """Norm ``pi_delta`` whose unit ball is ``{S_delta z : z in ball}``.

    ``ball`` is a basic ellitope in ``R^M``; ``S_delta`` is ``m x M``.
    """

    S_delta: np.ndarray
    ball: BasicEllitope
    kind: str
    delta: float
    labels: tuple = ()
    _inv: np.ndarray | None = field(init=False, repr=False, default=None)

    def __post_init__(self):
        if self.kind not in ("euclidean-ball", "general"):
            raise ValueError(f"unknown noise norm kind {self.kind!r}")
        _check_delta(self.delta)
        S = _readonly(np.atleast_2d(self.S_delta))
        if S.shape[1] != self.ball.dim:
            raise DimensionError(f"S_delta has {S.shape[1]} columns, ball lives in R^{self.ball.dim}")
        object.__setattr__(self, "S_delta", S)
        if S.shape[0] == S.shape[1] and np.linalg.cond(S) < 1e12:
            object.__setattr__(self, "_inv", _readonly(np.linalg.inv(S)))

    @property
    def m(self) -> int:
        return self.S_delta.shape[0]

    @property
    def M(self) -> int:
        return self.ball.dim

    @property
    def L(self) -> int:
        return self.ball.L

    @property
    def S_ell(self) -> tuple:
        return self.ball.S_ell

    @property
    def domain(self) -> MonotoneSet:
        return self.ball.domain

    @property
    def is_identity(self) -> bool:
        return self.S_delta.shape[0] == self.S_delta.shape[1] and np.array_equal(
            self.S_delta, np.eye(self.m)
        )

    def __call__(self, h) -> float | np.ndarray:
        """Evaluate ``pi_delta``; columns of a matrix are evaluated separately."""
        h = np.asarray(h, dtype=float)
        if h.shape[0] != self.m:
            raise DimensionError(f"vector of length {h.shape[0]}, norm lives on R^{self.m}")
        if self._inv is not None:
            return self.ball.gauge(self._inv @ h)
        if h.ndim == 2:
            return np.array([self._gauge_conic(col) for col in h.T])
        return self._gauge_conic(h)

    def _gauge_conic(self, h: np.ndarray) -> float:
        z = cp.Variable(self.M)
        prob = cp.Problem(cp.Minimize(self.ball.gauge_expr(z)), [self.S_delta @ z == h])
        prob.solve(solver="CLARABEL")
        if prob.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
            raise SolverError(f"norm evaluation returned status {prob.status}", prob.status)
        return float(prob.value)

    def cvx_expr(self, g):
        """Return ``(expr, constraints)`` with ``expr`` modelling ``pi_delta(g)``.

        ``g`` may be a vector or an ``m x J`` matrix (column-wise norms).
        """
        if self.is_identity:
            return self.ball.gauge_expr(g), []
        z = cp.Variable((self.M,) + tuple(g.shape[1:]))
        return self.ball.gauge_expr(z), [self.S_delta @ z == g]


def gaussian_norm(sigma_bar: float, delta: float, m: int) -> NoiseNorm:
    """``pi_delta(h) = sigma_bar * q_{1-delta/2} * ||h||_2`` for N(0, sigma^2 I), sigma <= sigma_bar."""
    delta = _check_delta(delta)
    if sigma_bar <= 0:
        raise ValueError("sigma_bar must be positive")
    q = normal_quantile(1.0 - delta / 2.0)
    domain = MonotoneSet.box([1.0 / (sigma_bar * q) ** 2])
    return NoiseNorm(np.eye(m), BasicEllitope((np.eye(m),), domain), "euclidean-ball", delta)


@dataclass(frozen=True, eq=False)
class MixtureModel:
    """``n`` Gaussian families ``N(a_i, Theta_i)`` on ``R^d``; the observation averages ``N_obs`` draws.

    ``means`` is ``d x n`` with ``a_i`` as columns, so it doubles as the sensing matrix.
    """

    means: np.ndarray
    covariances: tuple
    N_obs: int
    cov_factors: tuple = field(init=False, repr=False)

    def __post_init__(self):
        means = _readonly(np.atleast_2d(self.means))
        d, n = means.shape
        covs = tuple(_readonly(symmetrize(c)) for c in self.covariances)
        if len(covs) != n:
            raise DimensionError(f"{len(covs)} covariances for {n} families")
        for c in covs:
            if c.shape != (d, d):
                raise DimensionError(f"covariance has shape {c.shape}, expected ({d}, {d})")
            if min_eig(c) < -1e-10:
                raise ValueError("covariances must be positive semidefinite")
        if int(self.N_obs) <= 0:
            raise ValueError("N_obs must be a positive integer")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covariances", covs)
        object.__setattr__(self, "N_obs", int(self.N_obs))
        object.__setattr__(self, "cov_factors", tuple(psd_factor(c) for c in covs))

    @property
    def d(self) -> int:
        return self.means.shape[0]

    @property
    def n(self) -> int:
        return self.means.shape[1]

    @property
    def A(self) -> np.ndarray:
        return self.means


def mixture_beta(N_obs: int, delta: float) -> float:
    return math.sqrt(N_obs / math.log(2.0 / delta))


def mixture_norm(model: MixtureModel, delta: float) -> NoiseNorm:
    """Norm making ``pi(g) <= 1`` imply ``P{|g'xi| > 1} <= delta`` in the mixture model.

    Unit ball: ``g' S_l g <= 1`` for ``S_ij = 4/beta^2 (a_i - a_j)(a_i - a_j)'``
    (``i < j``) and ``S_ii = 4/beta^2 Theta_i``, ``L = n(n+1)/2``.
    """
    delta = _check_delta(delta)
    beta = mixture_beta(model.N_obs, delta)
    c = 4.0 / beta**2
    mats, labels = [], []
    a = model.means
    for i in range(model.n):
        for j in range(i, model.n):
            if i == j:
                mats.append(c * model.covariances[i])
            else:
                diff = a[:, i] - a[:, j]
                mats.append(c * np.outer(diff, diff))
            labels.append((i, j))
    ball = BasicEllitope(tuple(mats), MonotoneSet.unit_box(len(mats)))
    return NoiseNorm(np.eye(model.d), ball, "general", delta, tuple(labels))


def is_admissible(norm: NoiseNorm, h, tol: float = 1e-8) -> bool:
    return bool(np.all(np.asarray(norm(h)) <= 1.0 + tol))


def sample_gaussian(x, A, sigma: float, rng: np.random.Generator) -> np.ndarray:
    A = np.atleast_2d(A)
    return A @ np.asarray(x, dtype=float) + sigma * rng.standard_normal(A.shape[0])


def _probability_vector(x, n: int) -> np.ndarray:
    x = np.ravel(np.asarray(x, dtype=float))
    if x.shape != (n,):
        raise DimensionError(f"x has length {x.size}, expected {n}")
    if np.any(x < -1e-10) or abs(x.sum() - 1.0) > 1e-8:
        raise ValueError("x must be a probability vector")
    x = np.clip(x, 0.0, None)
    return x / x.sum()


def sample_mixture(model: MixtureModel, x, rng: np.random.Generator) -> np.ndarray:
    """Average of ``N_obs`` draws; draw ``t`` picks ``i_t ~ x`` then ``N(a_i, Theta_i)``."""
    x = _probability_vector(x, model.n)
    types = rng.choice(model.n, size=model.N_obs, p=x)
    counts = np.bincount(types, minlength=model.n)
    omega = model.means @ (counts / model.N_obs)
    noise = np.zeros(model.d)
    for i in np.flatnonzero(counts):
        f = model.cov_factors[i]
        if f.shape[1]:
            noise += (f @ rng.standard_normal((f.shape[1], counts[i]))).sum(axis=1)
    return omega + noise / model.N_obs


def sample_mixture_batch(model: MixtureModel, x, size: int, rng: np.random.Generator) -> np.ndarray:
    """``size`` observations (rows), same law as :func:`sample_mixture`.

    Uses multinomial type counts; a sum of ``c`` iid ``N(a, S)`` draws is ``N(c a, c S)``.
    """
    x = _probability_vector(x, model.n)
    counts = rng.multinomial(model.N_obs, x, size=size)
    out = (counts / model.N_obs) @ model.means.T
    for i, f in enumerate(model.cov_factors):
        if f.shape[1]:
            z = rng.standard_normal((size, f.shape[1])) * np.sqrt(counts[:, i])[:, None]
            out += z @ f.T / model.N_obs
    return out


def tail_bound(model: MixtureModel, h, tau: float, x=None) -> float:
    """Right-hand side ``2 exp(-tau^2 N / (2 (kappa^2 + sigma^2)))`` of the mixture tail bound.

    ``kappa = max_ij |h'(a_i - a_j)|`` and ``sigma^2 = max_i h' Theta_i h``.  The
    bound is uniform over signals, so ``x`` is only validated.
    """
    if x is not None:
        _probability_vector(x, model.n)
    h = np.ravel(np.asarray(h, dtype=float))
    proj = h @ model.means
    kappa = float(proj.max() - proj.min())
    sigma2 = max(float(h @ c @ h) for c in model.covariances)
    var = kappa**2 + sigma2
    if var <= 0:
        return 2.0 if tau <= 0 else 0.0
    return 2.0 * math.exp(-(tau**2) * model.N_obs / (2.0 * var))
