"""JSON + CSV descriptors for problem instances and design bundles.

Matrices in a descriptor are either inline nested lists, a path to a
header-free row-major CSV (relative to the JSON file), or the string
``"identity"``.  Numbers are written with ``repr`` precision.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from polyest.contrast import ContrastMatrix
from polyest.design import DesignProblem, DesignSolution
from polyest.noise import MixtureModel, NoiseNorm, gaussian_norm, mixture_norm
from polyest.sets import Ellitope, MonotoneSet, PolytopeImage, SignalSet


def write_matrix(path, a) -> None:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in a:
            w.writerow([repr(float(v)) for v in row])


def read_matrix(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
    return np.array(rows, dtype=float)


def _matrix(value, base: Path, size: int | None = None) -> np.ndarray:
    if isinstance(value, str):
        if value == "identity":
            if size is None:
                raise ValueError("'identity' needs a known dimension")
            return np.eye(size)
        return read_matrix(base / value)
    return np.atleast_2d(np.asarray(value, dtype=float))


def _vector(value, base: Path) -> np.ndarray:
    if isinstance(value, str):
        return read_matrix(base / value).ravel()
    return np.ravel(np.asarray(value, dtype=float))


@dataclass
class Instance:
    """Everything in a descriptor except ``delta``, which the caller chooses."""

    A: np.ndarray
    B: np.ndarray
    signal: SignalSet
    noise_spec: dict
    theta: float = 2.0
    mixture: MixtureModel | None = None

    def noise(self, delta: float) -> NoiseNorm:
        if self.mixture is not None:
            return mixture_norm(self.mixture, delta)
        return gaussian_norm(float(self.noise_spec["sigma"]), delta, self.A.shape[0])

    def problem(self, delta: float, theta: float | None = None) -> DesignProblem:
        th = self.theta if theta is None else theta
        return DesignProblem(self.signal, self.A, self.B, self.noise(delta), theta=th)

    @property
    def capacity(self) -> int:
        """``M + J``: the largest possible number of contrast columns."""
        M = self.mixture.d if self.mixture is not None else self.A.shape[0]
        return M + self.signal.polytope.J


def _ellitope(spec: dict, base: Path, n: int) -> Ellitope:
    kind = spec.get("type", "general")
    if kind == "l2-linf":
        return Ellitope.l2_linf(n, float(spec["rho2"]), float(spec["rho_inf"]))
    if kind == "ball":
        return Ellitope.ball(n, float(spec.get("radius", 1.0)))
    P = _matrix(spec.get("P", "identity"), base, n)
    N = P.shape[1]
    T = tuple(_matrix(t, base, N) for t in spec["T"])
    upper = spec.get("t_upper")
    domain = MonotoneSet.box(_vector(upper, base)) if upper is not None else MonotoneSet.unit_box(len(T))
    return Ellitope(P, T, domain)


def _polytope(spec: dict, base: Path, n: int) -> PolytopeImage:
    if spec.get("type") == "cross-polytope":
        return PolytopeImage.cross_polytope(n, float(spec.get("radius", 1.0)))
    R = _matrix(spec.get("R", "identity"), base, n)
    Q = _matrix(spec.get("Q", "identity"), base, R.shape[1])
    V = _matrix(spec["V"], base, Q.shape[0])
    return PolytopeImage(R, Q, V)


def load_instance(path) -> Instance:
    """Parse an instance descriptor; see the README for the field list."""
    path = Path(path)
    base = path.parent
    spec = json.loads(path.read_text())
    noise = dict(spec.get("noise", {}))
    mixture = None
    if noise.get("kind") == "mixture":
        means = _matrix(noise["means"], base)
        covs = [_matrix(c, base, means.shape[0]) for c in noise["covariances"]]
        mixture = MixtureModel(means, covs, int(noise["N"]))
        A = _matrix(spec["A"], base) if "A" in spec else mixture.A
    elif noise.get("kind") == "gaussian":
        A = _matrix(spec["A"], base)
    else:
        raise ValueError("noise.kind must be 'gaussian' or 'mixture'")
    n = A.shape[1]
    B = _matrix(spec.get("B", "identity"), base, n)
    signal = SignalSet(
        _ellitope(spec["ellitope"], base, n),
        _polytope(spec["polytope"], base, n),
        simplex=bool(spec.get("simplex", False)),
    )
    return Instance(A, B, signal, noise, float(spec.get("theta", 2.0)), mixture)


def _finite(v):
    return v if math.isfinite(v) else None


def write_design_bundle(out_dir, sol: DesignSolution, contrast: ContrastMatrix, extra: dict | None = None) -> dict:
    """Write ``solution.json`` plus matrix CSVs; returns the JSON payload."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_matrix(out / "H.csv", contrast.H if contrast.mu else np.zeros((contrast.m, 0)))
    for name in ("Theta", "Xi", "U", "S"):
        write_matrix(out / f"{name}.csv", getattr(sol, name))
    write_matrix(out / "weights.csv", np.atleast_2d(contrast.weights))
    write_matrix(out / "g.csv", sol.g)
    write_matrix(out / "gamma.csv", np.atleast_2d(sol.gamma))
    write_matrix(out / "zeta.csv", np.atleast_2d(sol.zeta))
    epsilon = contrast.mu * contrast.delta
    payload = {
        "mode": sol.mode,
        "theta": sol.theta,
        "delta": sol.delta,
        "epsilon": epsilon,
        "bound": sol.bound,
        "radicand": sol.radicand,
        "phi_T": sol.phi_T,
        "rho": sol.rho,
        "varsigma": sol.varsigma,
        "kappa": sol.kappa,
        "columns": contrast.mu,
        "provenance": list(contrast.provenance),
        "solver": {
            "status": sol.info.status if sol.info else None,
            "value": _finite(sol.info.value) if sol.info else None,
            "primal_residual": sol.info.primal_residual if sol.info else None,
        },
        "checks": {k: float(v) for k, v in sol.checks.items()},
    }
    payload.update(extra or {})
    (out / "solution.json").write_text(json.dumps(payload, indent=2, sort_keys=True))
    return payload


def load_contrast(path) -> np.ndarray:
    """``H`` from a bundle directory or a CSV file."""
    path = Path(path)
    if path.is_dir():
        path = path / "H.csv"
    return read_matrix(path)
