"""Monotone sets, ellitopes and polytope images.

An ellitope is ``{x = P z : z' T_k z <= t_k, t in T}`` with PSD ``T_k`` and a
monotone compact ``T`` in the nonnegative orthant.  A polytope image is
``{x = R w : Q w in Conv{+-v_1, ..., +-v_J}}`` with ``Ker Q = {0}``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import cvxpy as cp
import numpy as np

from polyest.errors import DimensionError, SolverError, UnsupportedSetError

PSD_TOL = 1e-10


def symmetrize(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + a.T)


def psd_sqrt(a: np.ndarray) -> np.ndarray:
    """Symmetric square root, negative eigenvalues clipped at zero."""
    w, v = np.linalg.eigh(symmetrize(a))
    w = np.sqrt(np.clip(w, 0.0, None))
    return symmetrize((v * w) @ v.T)


def psd_factor(a: np.ndarray, rtol: float = 1e-13) -> np.ndarray:
    """Thin factor ``F`` with ``a = F F'`` (columns for positive eigenvalues only)."""
    a = symmetrize(a)
    w, v = np.linalg.eigh(a)
    top = max(float(w.max(initial=0.0)), 0.0)
    keep = w > rtol * max(top, 1e-300)
    if not keep.any():
        return np.zeros((a.shape[0], 0))
    return v[:, keep] * np.sqrt(w[keep])


def min_eig(a: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(symmetrize(a))[0])


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def psd_constraint(expr) -> cp.Constraint:
    """PSD constraint on an expression that is symmetric by construction."""
    return 0.5 * (expr + expr.T) >> 0


@dataclass(frozen=True, eq=False)
class MonotoneSet:
    """Convex compact monotone subset of the nonnegative orthant.

    ``box`` is ``[0, upper]``; ``scaled-simplex`` is ``{s >= 0, sum(s) <= radius}``.
    The ``conic-oracle`` kind is a placeholder and every evaluation raises.
    """

    kind: str
    dim: int
    upper: np.ndarray | None = None
    radius: float | None = None

    def __post_init__(self):
        if self.kind == "box":
            if self.upper is None:
                raise ValueError("box kind needs upper bounds")
            up = _readonly(np.ravel(self.upper))
            if up.shape != (self.dim,):
                raise DimensionError(f"upper has shape {up.shape}, expected ({self.dim},)")
            if np.any(up < 0) or not np.all(np.isfinite(up)):
                raise ValueError("box upper bounds must be finite and nonnegative")
            object.__setattr__(self, "upper", up)
        elif self.kind == "scaled-simplex":
            if self.radius is None or self.radius < 0:
                raise ValueError("scaled-simplex kind needs a nonnegative radius")
        elif self.kind != "conic-oracle":
            raise ValueError(f"unknown monotone set kind {self.kind!r}")

    @classmethod
    def box(cls, upper: Sequence[float]) -> "MonotoneSet":
        upper = np.ravel(np.asarray(upper, dtype=float))
        return cls("box", upper.size, upper=upper)

    @classmethod
    def unit_box(cls, dim: int) -> "MonotoneSet":
        return cls.box(np.ones(dim))

    @classmethod
    def simplex(cls, dim: int, radius: float = 1.0) -> "MonotoneSet":
        return cls("scaled-simplex", dim, radius=float(radius))

    def _check(self, g: np.ndarray) -> np.ndarray:
        g = np.ravel(np.asarray(g, dtype=float))
        if g.shape != (self.dim,):
            raise DimensionError(f"argument has length {g.size}, set lives in R^{self.dim}")
        return g

    def support(self, g) -> float:
        """``max_{s in set} g's``."""
        g = self._check(g)
        if self.kind == "box":
            return float(np.clip(g, 0.0, None) @ self.upper)
        if self.kind == "scaled-simplex":
            return float(self.radius * max(0.0, float(g.max(initial=0.0))))
        raise UnsupportedSetError("support function of a conic-oracle set is not available")

    def contains(self, s, tol: float = 1e-9) -> bool:
        s = self._check(s)
        if np.any(s < -tol):
            return False
        if self.kind == "box":
            return bool(np.all(s <= self.upper + tol))
        if self.kind == "scaled-simplex":
            return bool(s.sum() <= self.radius + tol)
        raise UnsupportedSetError("membership in a conic-oracle set is not available")

    def require_box(self, what: str = "this operation") -> np.ndarray:
        if self.kind != "box":
            raise UnsupportedSetError(f"{what} supports box monotone sets only, got {self.kind!r}")
        return self.upper


def support_function(mset: MonotoneSet, g) -> float:
    return mset.support(g)


@dataclass(frozen=True, eq=False)
class BasicEllitope:
    """Basic ellitope ``{g : g' S_l g <= s_l, s in domain}`` and its gauge."""

    S_ell: tuple
    domain: MonotoneSet
    factors: tuple = field(init=False, repr=False)

    def __post_init__(self):
        mats = tuple(_readonly(symmetrize(s)) for s in self.S_ell)
        if not mats:
            raise ValueError("need at least one matrix")
        dim = mats[0].shape[0]
        for s in mats:
            if s.shape != (dim, dim):
                raise DimensionError("all S_l must be square of the same size")
            if min_eig(s) < -PSD_TOL:
                raise ValueError("S_l must be positive semidefinite")
        if min_eig(sum(mats)) <= PSD_TOL:
            raise ValueError("sum of S_l must be positive definite")
        if self.domain.dim != len(mats):
            raise DimensionError(f"domain has dimension {self.domain.dim}, expected {len(mats)}")
        object.__setattr__(self, "S_ell", mats)
        object.__setattr__(self, "factors", tuple(psd_factor(s) for s in mats))

    @property
    def dim(self) -> int:
        return self.S_ell[0].shape[0]

    @property
    def L(self) -> int:
        return len(self.S_ell)

    def quad_values(self, g: np.ndarray) -> np.ndarray:
        """``g' S_l g`` for every l; ``g`` may be a matrix of columns."""
        g = np.asarray(g, dtype=float)
        if g.shape[0] != self.dim:
            raise DimensionError(f"vector of length {g.shape[0]}, ball lives in R^{self.dim}")
        if g.ndim == 1:
            return np.array([float(np.sum((f.T @ g) ** 2)) for f in self.factors])
        return np.array([np.sum((f.T @ g) ** 2, axis=0) for f in self.factors])

    def gauge(self, g) -> float | np.ndarray:
        """Minkowski gauge ``min{u >= 0 : g in u * ball}`` (box domain only).

        For a box ``[0, s]`` this is ``max_l sqrt(g' S_l g / s_l)``.  Columns of a
        2-D argument are gauged independently.
        """
        upper = self.domain.require_box("gauge evaluation")
        q = self.quad_values(g)
        q = np.clip(q, 0.0, None)
        up = upper if q.ndim == 1 else upper[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(up > 0, q / np.where(up > 0, up, 1.0), np.where(q > 0, np.inf, 0.0))
        return np.sqrt(r.max(axis=0)) if q.ndim > 1 else float(np.sqrt(r.max()))

    def gauge_expr(self, g):
        """cvxpy expression of the gauge for a vector or matrix of columns."""
        upper = self.domain.require_box("gauge expression")
        terms = []
        for f, s in zip(self.factors, upper):
            if f.shape[1] == 0:
                continue
            if s <= 0:
                raise UnsupportedSetError("zero box bound with nonzero S_l is not supported")
            if g.ndim == 1:
                terms.append(cp.norm(f.T @ g, 2) / np.sqrt(s))
            else:
                terms.append(cp.norm(f.T @ g, 2, axis=0) / np.sqrt(s))
        return terms[0] if len(terms) == 1 else cp.maximum(*terms)


@dataclass(frozen=True, eq=False)
class Ellitope:
    P: np.ndarray
    T: tuple
    domain: MonotoneSet
    E: tuple = field(init=False, repr=False)
    factors: tuple = field(init=False, repr=False)

    def __post_init__(self):
        P = _readonly(np.atleast_2d(self.P))
        mats = tuple(_readonly(symmetrize(t)) for t in self.T)
        N = P.shape[1]
        if not mats:
            raise ValueError("need at least one T_k")
        for t in mats:
            if t.shape != (N, N):
                raise DimensionError(f"T_k has shape {t.shape}, expected ({N}, {N})")
            if min_eig(t) < -PSD_TOL:
                raise ValueError("T_k must be positive semidefinite")
        if min_eig(sum(mats)) <= PSD_TOL:
            raise ValueError("sum of T_k must be positive definite")
        if self.domain.dim != len(mats):
            raise DimensionError(f"domain has dimension {self.domain.dim}, expected {len(mats)}")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "T", mats)
        object.__setattr__(self, "E", tuple(_readonly(2.0 * psd_sqrt(t)) for t in mats))
        object.__setattr__(self, "factors", tuple(psd_factor(t) for t in mats))

    @property
    def n(self) -> int:
        return self.P.shape[0]

    @property
    def N(self) -> int:
        return self.P.shape[1]

    @property
    def K(self) -> int:
        return len(self.T)

    @classmethod
    def ball(cls, n: int, radius: float = 1.0) -> "Ellitope":
        return cls(np.eye(n), (np.eye(n) / radius**2,), MonotoneSet.unit_box(1))

    @classmethod
    def l2_linf(cls, n: int, rho2: float, rho_inf: float) -> "Ellitope":
        """``{||x||_2 <= rho2, ||x||_inf <= rho_inf}`` with K = n + 1, T = unit box."""
        mats = [np.eye(n) / rho2**2]
        for k in range(n):
            t = np.zeros((n, n))
            t[k, k] = 1.0 / rho_inf**2
            mats.append(t)
        return cls(np.eye(n), tuple(mats), MonotoneSet.unit_box(n + 1))

    def cvx_constraints(self, x) -> list:
        """Constraints placing the cvxpy vector ``x`` in the ellitope."""
        upper = self.domain.require_box("ellitope constraints")
        z = cp.Variable(self.N)
        cons = [x == self.P @ z]
        for f, s in zip(self.factors, upper):
            if f.shape[1]:
                cons.append(cp.sum_squares(f.T @ z) <= s)
        return cons


def ellitope_membership(e: Ellitope, x, tol: float = 1e-7, solver: str = "CLARABEL") -> bool:
    """Decide ``x in e`` up to ``tol``.

    Square invertible ``P`` is handled in closed form; otherwise a conic
    program computes the distance from ``x`` to the ellitope.
    """
    x = np.ravel(np.asarray(x, dtype=float))
    if x.shape != (e.n,):
        raise DimensionError(f"x has length {x.size}, ellitope lives in R^{e.n}")
    if not np.any(x):
        return True
    upper = e.domain.require_box("ellitope membership")
    if e.n == e.N and np.linalg.cond(e.P) < 1e12:
        z = np.linalg.solve(e.P, x)
        q = np.array([z @ t @ z for t in e.T])
        return bool(np.all(q <= upper * (1.0 + tol) + tol))
    y = cp.Variable(e.n)
    prob = cp.Problem(cp.Minimize(cp.norm(y - x, 2)), e.cvx_constraints(y))
    try:
        prob.solve(solver=solver)
    except cp.error.SolverError as exc:
        raise SolverError(f"membership solve failed: {exc}") from exc
    if prob.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        raise SolverError(f"membership solve returned status {prob.status}")
    return bool(prob.value <= tol * max(1.0, float(np.linalg.norm(x))))


@dataclass(frozen=True, eq=False)
class PolytopeImage:
    R: np.ndarray
    Q: np.ndarray
    V: np.ndarray
    Q_pinv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        R, Q, V = (_readonly(np.atleast_2d(a)) for a in (self.R, self.Q, self.V))
        if R.shape[1] != Q.shape[1]:
            raise DimensionError("R and Q must have the same number of columns")
        if V.shape[0] != Q.shape[0]:
            raise DimensionError("V must have as many rows as Q")
        if np.linalg.svd(Q, compute_uv=False).min() <= 1e-10:
            raise ValueError("Q must have a trivial kernel")
        Qp = _readonly(np.linalg.pinv(Q))
        if np.abs(Qp @ Q - np.eye(Q.shape[1])).max() > 1e-8:
            raise ValueError("pseudoinverse check failed")
        for name, a in (("R", R), ("Q", Q), ("V", V), ("Q_pinv", Qp)):
            object.__setattr__(self, name, a)

    @property
    def n(self) -> int:
        return self.R.shape[0]

    @property
    def p(self) -> int:
        return self.Q.shape[0]

    @property
    def q(self) -> int:
        return self.Q.shape[1]

    @property
    def J(self) -> int:
        return self.V.shape[1]

    @property
    def lift(self) -> np.ndarray:
        """``R Q^+`` mapping ``y`` coordinates back to signals."""
        return self.R @ self.Q_pinv

    @classmethod
    def cross_polytope(cls, n: int, radius: float = 1.0) -> "PolytopeImage":
        return cls(np.eye(n), np.eye(n), radius * np.eye(n))

    def vertices(self) -> np.ndarray:
        """Images ``R Q^+ v_j`` of the generators (columns)."""
        return self.lift @ self.V

    def cvx_constraints(self, x) -> list:
        w = cp.Variable(self.q)
        lam = cp.Variable(self.J)
        return [x == self.R @ w, self.Q @ w == self.V @ lam, cp.norm(lam, 1) <= 1]


def sbar_matrix(S, poly: PolytopeImage) -> np.ndarray:
    """``[Q^+]' R' S R Q^+``."""
    S = np.asarray(S, dtype=float)
    if S.shape != (poly.n, poly.n):
        raise DimensionError(f"S has shape {S.shape}, expected ({poly.n}, {poly.n})")
    W = poly.lift
    return symmetrize(W.T @ S @ W)


@dataclass(frozen=True, eq=False)
class SignalSet:
    """Signal set ``X = ellitope ∩ polytope image [∩ probability simplex]``.

    The symmetrization of such an ``X`` lies in the intersection of the two
    symmetric pieces, which is what the design programs use.
    """

    ellitope: Ellitope
    polytope: PolytopeImage
    simplex: bool = False

    def __post_init__(self):
        if self.ellitope.n != self.polytope.n:
            raise DimensionError("ellitope and polytope live in different spaces")

    @property
    def n(self) -> int:
        return self.ellitope.n

    def cvx_constraints(self, x, symmetric: bool = False) -> list:
        cons = self.ellitope.cvx_constraints(x) + self.polytope.cvx_constraints(x)
        if self.simplex and not symmetric:
            cons += [x >= 0, cp.sum(x) == 1]
        return cons

    def contains(self, x, tol: float = 1e-7) -> bool:
        x = np.ravel(np.asarray(x, dtype=float))
        if self.simplex and (np.any(x < -tol) or abs(x.sum() - 1.0) > tol):
            return False
        if not ellitope_membership(self.ellitope, x, tol):
            return False
        return polytope_membership(self.polytope, x, tol)


def polytope_membership(poly: PolytopeImage, x, tol: float = 1e-7, solver: str = "CLARABEL") -> bool:
    x = np.ravel(np.asarray(x, dtype=float))
    if x.shape != (poly.n,):
        raise DimensionError(f"x has length {x.size}, polytope lives in R^{poly.n}")
    if not np.any(x):
        return True
    w = cp.Variable(poly.q)
    lam = cp.Variable(poly.J)
    prob = cp.Problem(
        cp.Minimize(cp.norm(lam, 1)),
        [poly.R @ w == x, poly.Q @ w == poly.V @ lam],
    )
    try:
        prob.solve(solver=solver)
    except cp.error.SolverError as exc:
        raise SolverError(f"polytope membership solve failed: {exc}") from exc
    if prob.status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        return False
    if prob.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        raise SolverError(f"polytope membership solve returned status {prob.status}")
    return bool(prob.value <= 1.0 + tol)
