"""Semidefinite cone certifying admissible rank-one decompositions, and the
randomized procedure that recovers such a decomposition.

A pair ``(Xi, rho)`` is a cone member when ``Tr(Xi S_l) <= (rho/kappa) s_l``
for some ``s`` in the ball's monotone set.  Members decompose as
``Xi = sum_j lambda_j g_j g_j'`` with ``sum(lambda) = rho`` and every ``g_j``
in the unit ball; the decomposition is found by rotating ``Xi^{1/2}`` with a
random sign diagonal followed by the orthonormal DCT-II matrix.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import fft

from polyest.contrast import ELLITOPE_SIDE, ContrastMatrix
from polyest.errors import ExtractionError
from polyest.sets import BasicEllitope, min_eig, psd_sqrt, symmetrize

ACCEPT_TOL = 1e-10


def kappa_const(M: int, L: int) -> float:
    """``2 sqrt(2) ln(4 M^2 L)``."""
    if M < 1 or L < 1:
        raise ValueError("M and L must be positive")
    return 2.0 * math.sqrt(2.0) * math.log(4.0 * M * M * L)


@dataclass(frozen=True, eq=False)
class ConeMember:
    Xi: np.ndarray
    rho: float
    certificate: np.ndarray
    kappa: float


@dataclass(frozen=True, eq=False)
class RankOneDecomposition:
    lambdas: np.ndarray
    vectors: np.ndarray  # columns g_j
    trials_used: int
    max_gauge: float

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.lambdas) @ self.vectors.T

    def to_csv(self, path) -> None:
        """One row per component: ``lambda, g_1, ..., g_M``."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lambda"] + [f"g{i}" for i in range(self.vectors.shape[0])])
            for lam, g in zip(self.lambdas, self.vectors.T):
                w.writerow([repr(float(lam))] + [repr(float(v)) for v in g])


def _kappa_for(ball: BasicEllitope, kappa: float | None) -> float:
    return kappa_const(ball.dim, ball.L) if kappa is None else float(kappa)


def cone_check(ball: BasicEllitope, Xi, rho: float, tol: float = 1e-8, kappa: float | None = None):
    """Return a :class:`ConeMember` certifying ``(Xi, rho)``, or ``None``.

    With a box domain the upper corner is the best certificate, so the test is
    ``Tr(Xi S_l) <= (rho/kappa) s_l`` for every ``l`` (slack ``tol * max(1, rho)``).
    """
    Xi = symmetrize(np.asarray(Xi, dtype=float))
    if Xi.shape != (ball.dim, ball.dim):
        raise ValueError(f"Xi has shape {Xi.shape}, expected ({ball.dim}, {ball.dim})")
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    kap = _kappa_for(ball, kappa)
    if min_eig(Xi) < -tol:
        return None
    s = ball.domain.require_box("cone membership")
    traces = np.array([np.sum(Xi * S) for S in ball.S_ell])
    if np.all(traces <= (rho / kap) * s + tol * max(1.0, rho)):
        return ConeMember(Xi, float(rho), s.copy(), kap)
    return None


def min_cone_rho(ball: BasicEllitope, Xi, kappa: float | None = None) -> float:
    """Smallest ``rho`` with ``(Xi, rho)`` in the cone (box domain)."""
    kap = _kappa_for(ball, kappa)
    s = ball.domain.require_box("cone membership")
    traces = np.array([np.sum(symmetrize(Xi) * S) for S in ball.S_ell])
    ratios = np.where(s > 0, traces / np.where(s > 0, s, 1.0), np.where(traces > 0, np.inf, 0.0))
    return kap * max(0.0, float(ratios.max()))


def dct_matrix(M: int) -> np.ndarray:
    """Orthonormal DCT-II matrix (row ``k`` is the ``k``-th cosine basis vector)."""
    return fft.dct(np.eye(M), type=2, norm="ortho", axis=0)


def rotate(Z: np.ndarray, signs: np.ndarray, O: np.ndarray) -> np.ndarray:
    """``Z Diag(signs) O``; its Gram matrix ``Z^e Z^e'`` equals ``Z Z'`` for every sign pattern."""
    return (Z * signs) @ O


def extract_rank_one(
    member: ConeMember,
    ball: BasicEllitope,
    rng: np.random.Generator,
    max_trials: int = 64,
) -> RankOneDecomposition:
    """Randomized decomposition of a cone member into unit-ball rank-one terms.

    Trial ``k`` consumes the ``k``-th block of ``M`` Rademacher signs drawn from
    ``rng`` (``rng.integers(0, 2, M)``), so results are fixed by the generator
    state.  The first trial whose columns ``g_j = sqrt(M/rho) Col_j[Z^e]`` all
    have gauge at most one is returned, with ``lambda_j = rho / M``.
    """
    M = ball.dim
    if member.rho <= 0:
        return RankOneDecomposition(np.zeros(0), np.zeros((M, 0)), 0, 0.0)
    Z = psd_sqrt(member.Xi)
    O = dct_matrix(M)
    scale = math.sqrt(M / member.rho)
    best = math.inf
    for trial in range(1, max_trials + 1):
        signs = rng.integers(0, 2, size=M) * 2 - 1
        G = scale * rotate(Z, signs, O)
        worst = float(np.max(ball.gauge(G)))
        best = min(best, worst)
        if worst <= 1.0 + ACCEPT_TOL:
            return RankOneDecomposition(np.full(M, member.rho / M), G, trial, worst)
    raise ExtractionError(
        f"no admissible rotation in {max_trials} trials (best max gauge {best:.6g})", max_trials, best
    )


def acceptance_rate(member: ConeMember, ball: BasicEllitope, rng: np.random.Generator, trials: int) -> float:
    """Fraction of independent sign draws whose rotation is admissible."""
    M = ball.dim
    Z = psd_sqrt(member.Xi)
    O = dct_matrix(M)
    scale = math.sqrt(M / member.rho)
    hits = 0
    for _ in range(trials):
        signs = rng.integers(0, 2, size=M) * 2 - 1
        hits += float(np.max(ball.gauge(scale * rotate(Z, signs, O)))) <= 1.0 + ACCEPT_TOL
    return hits / trials


def lift_to_contrasts(decomp: RankOneDecomposition, S_delta, delta: float) -> ContrastMatrix:
    """Map ``g_j`` to ``h_j = S_delta g_j``; ``Theta = S_delta Xi S_delta'`` is reproduced."""
    S_delta = np.atleast_2d(np.asarray(S_delta, dtype=float))
    H = S_delta @ decomp.vectors
    return ContrastMatrix(H, (ELLITOPE_SIDE,) * H.shape[1], delta, decomp.lambdas.copy())


@dataclass(frozen=True)
class SandwichReport:
    in_bplus: bool
    sum_lambda: float
    kappa: float
    max_gauge: float
    reconstruction_error: float
    trials_used: int

    @property
    def ok(self) -> bool:
        return self.in_bplus and self.sum_lambda <= self.kappa * (1 + 1e-12) and self.max_gauge <= 1 + 1e-8


def verify_sandwich(ball: BasicEllitope, G, rng: np.random.Generator, S_delta=None, tol: float = 1e-8) -> SandwichReport:
    """Check the inclusion chain for ``H = S G S'`` with ``Tr(S_l G) <= s_l``.

    Such an ``H`` lies in the relaxed hull; extraction with ``rho = kappa`` must
    return a decomposition into admissible rank-one terms of total weight at
    most ``kappa``.
    """
    G = symmetrize(np.asarray(G, dtype=float))
    kap = kappa_const(ball.dim, ball.L)
    member = cone_check(ball, G, kap, tol=tol)
    if member is None:
        return SandwichReport(False, math.nan, kap, math.nan, math.nan, 0)
    dec = extract_rank_one(member, ball, rng)
    S = np.eye(ball.dim) if S_delta is None else np.asarray(S_delta, dtype=float)
    H = S @ G @ S.T
    Hs = S @ dec.vectors
    err = float(np.linalg.norm(H - (Hs * dec.lambdas) @ Hs.T))
    gmax = float(np.max(ball.gauge(dec.vectors))) if dec.vectors.shape[1] else 0.0
    return SandwichReport(True, float(dec.lambdas.sum()), kap, gmax, err, dec.trials_used)
