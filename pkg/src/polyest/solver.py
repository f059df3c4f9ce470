"""Thin wrapper around cvxpy conic solves that reports residuals."""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from polyest.errors import SolverError

_CAPS = {
    "CLARABEL": {"linear", "second-order cone", "PSD cone"},
    "SCS": {"linear", "second-order cone", "PSD cone"},
    "CVXOPT": {"linear", "second-order cone", "PSD cone"},
}


@dataclass
class SolveInfo:
    status: str
    value: float
    primal_residual: float
    dual_residual: float
    solve_time: float


@dataclass
class SolverOptions:
    solver: str = "CLARABEL"
    feas_tol: float = 1e-7
    verify_tol: float = 1e-6
    verbose: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def capabilities(self) -> set:
        return _CAPS.get(self.solver, set())

    def _kwargs(self) -> dict:
        kw = dict(self.extra)
        if self.solver == "CLARABEL":
            kw.setdefault("tol_feas", min(self.feas_tol, 1e-10))
            kw.setdefault("tol_gap_abs", 1e-10)
            kw.setdefault("tol_gap_rel", 1e-10)
            kw.setdefault("max_iter", 500)
        elif self.solver == "SCS":
            kw.setdefault("eps", self.feas_tol)
        return kw

    def solve(self, prob: cp.Problem, what: str = "problem") -> SolveInfo:
        t0 = time.perf_counter()
        try:
            with warnings.catch_warnings():
                # inaccurate solutions are screened by residual below
                warnings.filterwarnings("ignore", message="Solution may be inaccurate")
                prob.solve(solver=self.solver, verbose=self.verbose, **self._kwargs())
        except cp.error.SolverError as exc:
            raise SolverError(f"{what}: solver failure ({exc})", "solver_error") from exc
        elapsed = time.perf_counter() - t0
        status = prob.status
        if status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
            raise SolverError(f"{what}: solver returned status {status}", status)
        pres = max((_violation(c) for c in prob.constraints), default=0.0)
        dres = max((_dual_violation(c) for c in prob.constraints), default=0.0)
        if status == cp.OPTIMAL_INACCURATE and pres > 1e3 * self.verify_tol:
            raise SolverError(
                f"{what}: inaccurate solution with residual {pres:.3g}", status, {"primal": pres, "dual": dres}
            )
        return SolveInfo(status, float(prob.value), pres, dres, elapsed)


def _violation(c) -> float:
    try:
        v = c.violation()
    except (ValueError, TypeError):
        return float("nan")
    return float(np.max(v)) if np.size(v) else 0.0


def _dual_violation(c) -> float:
    d = c.dual_value
    if d is None:
        return 0.0
    if isinstance(c, cp.constraints.Inequality):
        return float(np.max(np.clip(-np.asarray(d), 0.0, None), initial=0.0))
    if isinstance(c, cp.constraints.PSD):
        d = np.asarray(d)
        return max(0.0, -float(np.linalg.eigvalsh(0.5 * (d + d.T))[0]))
    return 0.0
