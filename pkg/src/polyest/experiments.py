"""Config-driven simulation experiments and report emission."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from polyest.contrast import ELLITOPE_SIDE, POLYTOPE_SIDE, ContrastMatrix
from polyest.design import (
    MODES,
    DesignProblem,
    DesignSolution,
    assemble_contrast,
    l1_ellitope_problem,
    solve_master,
    solve_master_gaussian,
)
from polyest.errors import SolverError
from polyest.estimator import PolyhedralEstimator, least_squares_baseline, monte_carlo_risk
from polyest.noise import MixtureModel, sample_gaussian, sample_mixture, mixture_norm
from polyest.sets import Ellitope, PolytopeImage, SignalSet
from polyest.solver import SolverOptions

log = logging.getLogger(__name__)

ESTIMATOR_OF_MODE = {"full": "H", "ellitope-only": "E", "polytope-only": "P"}


@dataclass
class ExperimentConfig:
    kind: str = "l1-ellitope"
    n: int = 16
    m: int | None = None
    d: int | None = None
    nu: int | None = None
    rho1: float = 10.0
    rho2: float | None = None
    rho_inf: float | None = None
    sigma: float = 0.01
    N_obs: int = 10000
    epsilon: float = 0.01
    delta: float | None = None
    theta: float | None = None
    cond_A: float = 1e3
    cond_B: float = 8.0
    trials: int = 100
    seed: int = 0
    refine_delta: bool = True
    out: str = "runs"

    def __post_init__(self):
        if self.kind not in ("l1-ellitope", "mixture"):
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.kind == "l1-ellitope":
            self.m = self.m or self.n
            self.nu = self.nu or 2 * self.n - 2
            self.rho2 = 8.5 if self.rho2 is None else float(self.rho2)
            self.rho_inf = 7.0 if self.rho_inf is None else float(self.rho_inf)
            self.theta = 2.0 if self.theta is None else float(self.theta)
        else:
            self.d = self.d or self.n
            self.m = self.d
            self.nu = self.n
            self.rho2 = 1.0 if self.rho2 is None else float(self.rho2)
            self.rho_inf = 0.5 if self.rho_inf is None else float(self.rho_inf)
            self.theta = 1.0 if self.theta is None else float(self.theta)
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.trials < 0:
            raise ValueError("trials must be nonnegative")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def hash(self) -> str:
        payload = {k: v for k, v in self.to_dict().items() if k != "out"}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:12]


@dataclass
class RunRecord:
    config: dict
    config_hash: str
    designs: dict = field(default_factory=dict)
    spectra: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)
    bounds: dict = field(default_factory=dict)
    epsilons: dict = field(default_factory=dict)
    risk: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunRecord":
        return cls(**data)

    def rerun_config(self) -> ExperimentConfig:
        """Config (seed included) that regenerates this record."""
        return ExperimentConfig.from_dict(self.config)


def random_matrix(rows: int, cols: int, cond: float, rng: np.random.Generator) -> np.ndarray:
    """Matrix with orthogonal factors from QR of Gaussians and log-uniform singular values in ``[1/cond, 1]``."""
    r = min(rows, cols)
    U, _ = np.linalg.qr(rng.standard_normal((rows, r)))
    V, _ = np.linalg.qr(rng.standard_normal((cols, r)))
    s = np.sort(np.exp(rng.uniform(-math.log(cond), 0.0, size=r)))[::-1]
    s[0], s[-1] = 1.0, 1.0 / cond
    return (U * s) @ V.T


def random_unit_psd(d: int, rng: np.random.Generator) -> np.ndarray:
    Z = rng.standard_normal((d, d))
    C = Z @ Z.T
    return C / np.linalg.norm(C, 2)


def mixture_instance(cfg: ExperimentConfig, rng: np.random.Generator) -> MixtureModel:
    a = rng.standard_normal((cfg.d, cfg.n))
    a /= np.linalg.norm(a, axis=0)
    covs = [random_unit_psd(cfg.d, rng) for _ in range(cfg.n)]
    return MixtureModel(a, covs, cfg.N_obs)


def mixture_problem(model: MixtureModel, rho2: float, rho_inf: float, delta: float, theta: float = 1.0) -> DesignProblem:
    """Simplex signals inside ``{||x||_2 <= rho2, ||x||_inf <= rho_inf}``, generators ``+-e_j``, ``B = I``."""
    n = model.n
    signal = SignalSet(Ellitope.l2_linf(n, rho2, rho_inf), PolytopeImage.cross_polytope(n), simplex=True)
    return DesignProblem(signal, model.A, np.eye(n), mixture_norm(model, delta), theta=theta)


def _design_all(build, solve, cfg: ExperimentConfig, delta: float, rng: np.random.Generator):
    """Solve the three designs at one ``delta`` and assemble their contrasts.

    The restricted solutions are feasible points of the full program, so the
    full design keeps whichever of the three has the smallest objective.
    """
    problem = build(delta)
    sols = {mode: solve(problem, mode) for mode in MODES}
    raw_full = sols["full"].objective
    best = min(MODES, key=lambda mode: sols[mode].objective)
    source = {mode: mode for mode in MODES}
    if best != "full" and sols[best].objective < raw_full:
        source["full"] = best
        sols["full"] = dataclasses.replace(sols[best])
    contrasts = {mode: assemble_contrast(sols[mode], problem.noise, rng) for mode in MODES}
    return problem, sols, contrasts, source, raw_full


def _eps_ok(contrasts: dict, delta: float, target: float) -> bool:
    return all(c.mu * delta <= target * (1 + 1e-12) for c in contrasts.values())


def _run_designs(build, solve, cfg: ExperimentConfig, rng: np.random.Generator, capacity: int):
    delta = cfg.delta if cfg.delta is not None else cfg.epsilon / capacity
    state = rng.bit_generator.state
    out = _design_all(build, solve, cfg, delta, rng)
    mu_full = out[2]["full"].mu
    if cfg.delta is None and cfg.refine_delta and 0 < mu_full < capacity:
        delta2 = cfg.epsilon / mu_full
        rng.bit_generator.state = state
        retry = _design_all(build, solve, cfg, delta2, rng)
        if _eps_ok(retry[2], delta2, cfg.epsilon):
            return retry + (delta2,)
        log.info("delta refinement increased the column count; keeping delta=%g", delta)
        rng.bit_generator.state = state
        out = _design_all(build, solve, cfg, delta, rng)
    return out + (delta,)


def _design_summary(sol: DesignSolution, contrast: ContrastMatrix, delta: float, source: str, raw: float) -> dict:
    return {
        "phi_T": sol.phi_T,
        "rho": sol.rho,
        "varsigma": sol.varsigma,
        "radicand": sol.radicand,
        "bound": sol.bound,
        "delta": delta,
        "epsilon": contrast.mu * delta,
        "mu": contrast.mu,
        "ellitope_columns": contrast.count(ELLITOPE_SIDE),
        "polytope_columns": contrast.count(POLYTOPE_SIDE),
        "kappa": sol.kappa,
        "source": source,
        "raw_objective": raw,
    }


def _record_designs(record: RunRecord, sols, contrasts, source, raw_full, delta) -> None:
    for mode in MODES:
        name = ESTIMATOR_OF_MODE[mode]
        raw = raw_full if mode == "full" else sols[mode].objective
        record.designs[name] = _design_summary(sols[mode], contrasts[mode], delta, source[mode], raw)
        record.bounds[name] = sols[mode].bound
        record.epsilons[name] = contrasts[mode].mu * delta
    full = sols["full"]
    record.spectra["U"] = np.linalg.eigvalsh(full.U).tolist()
    record.spectra["S"] = np.linalg.eigvalsh(full.S).tolist()
    record.spectra["U+S"] = np.linalg.eigvalsh(full.U + full.S).tolist()


def _simulate(record, cfg, signal, A, B, noise_sampler, contrasts, extra_estimators, options):
    estimators, Hs = {}, {}
    for mode in MODES:
        name = ESTIMATOR_OF_MODE[mode]
        if contrasts[mode].mu == 0:
            log.warning("design %s produced no contrast columns; estimator skipped", name)
            continue
        est = PolyhedralEstimator(contrasts[mode], signal, A, B, options)
        estimators[name] = lambda om, est=est: est(om).x_hat
        Hs[name] = contrasts[mode].H
    estimators.update(extra_estimators)
    reports = monte_carlo_risk(
        signal, A, B, noise_sampler, estimators, record.bounds, cfg.trials, cfg.theta, cfg.epsilon,
        cfg.seed, contrasts=Hs,
    )
    for name, rep in reports.items():
        record.errors[name] = rep.errors.tolist()
        record.risk[name] = {
            "trials": rep.trials,
            "median_error": float(np.median(rep.errors)),
            "quantile": rep.quantile,
            "bound": rep.bound,
            "exceed_fraction": rep.exceed_fraction,
            "implication_violations": rep.implication_violations(),
        }
    return reports


def run_experiment_one(cfg: ExperimentConfig, rng: np.random.Generator | None = None,
                       options: SolverOptions | None = None) -> RunRecord:
    """Spherical Gaussian noise, ``X = {||x||_1 <= rho1, ||x||_2 <= rho2, ||x||_inf <= rho_inf}``, ``l2`` loss."""
    if cfg.kind != "l1-ellitope":
        raise ValueError("run_experiment_one needs kind 'l1-ellitope'")
    rng = rng or np.random.default_rng(cfg.seed)
    t0 = time.perf_counter()
    A = random_matrix(cfg.m, cfg.n, cfg.cond_A, rng)
    B = random_matrix(cfg.nu, cfg.n, cfg.cond_B, rng)
    record = RunRecord(cfg.to_dict(), cfg.hash())
    record.spectra["A"] = np.linalg.svd(A, compute_uv=False).tolist()
    record.spectra["B"] = np.linalg.svd(B, compute_uv=False).tolist()

    build = lambda delta: l1_ellitope_problem(A, B, cfg.rho1, cfg.rho2, cfg.rho_inf, cfg.sigma, delta)
    solve = lambda problem, mode: solve_master_gaussian(
        A, B, cfg.rho1, cfg.rho2, cfg.rho_inf, cfg.sigma, problem.delta, mode, options
    )
    problem, sols, contrasts, source, raw_full, delta = _run_designs(build, solve, cfg, rng, cfg.m + cfg.n)
    _record_designs(record, sols, contrasts, source, raw_full, delta)
    record.timing["design"] = time.perf_counter() - t0
    if cfg.trials:
        t1 = time.perf_counter()
        noise_sampler = lambda x, r: sample_gaussian(x, A, cfg.sigma, r)
        extra = {"LS": lambda om: least_squares_baseline(om, A)}
        _simulate(record, cfg, problem.signal, A, B, noise_sampler, contrasts, extra, options)
        record.timing["simulation"] = time.perf_counter() - t1
    return record


def run_experiment_two(cfg: ExperimentConfig, rng: np.random.Generator | None = None,
                       options: SolverOptions | None = None) -> RunRecord:
    """Mixture regression: recover type proportions from the mean of ``N_obs`` signatures, ``l1`` loss."""
    if cfg.kind != "mixture":
        raise ValueError("run_experiment_two needs kind 'mixture'")
    rng = rng or np.random.default_rng(cfg.seed)
    t0 = time.perf_counter()
    model = mixture_instance(cfg, rng)
    record = RunRecord(cfg.to_dict(), cfg.hash())
    record.spectra["A"] = np.linalg.svd(model.A, compute_uv=False).tolist()

    build = lambda delta: mixture_problem(model, cfg.rho2, cfg.rho_inf, delta, cfg.theta)
    solve = lambda problem, mode: solve_master(problem, mode, options)
    problem, sols, contrasts, source, raw_full, delta = _run_designs(build, solve, cfg, rng, cfg.d + cfg.n)
    _record_designs(record, sols, contrasts, source, raw_full, delta)
    record.timing["design"] = time.perf_counter() - t0
    if cfg.trials:
        t1 = time.perf_counter()
        noise_sampler = lambda x, r: sample_mixture(model, x, r)
        _simulate(record, cfg, problem.signal, model.A, np.eye(cfg.n), noise_sampler, contrasts, {}, options)
        record.timing["simulation"] = time.perf_counter() - t1
    return record


def run_experiment(cfg: ExperimentConfig, options: SolverOptions | None = None) -> RunRecord:
    runner = run_experiment_one if cfg.kind == "l1-ellitope" else run_experiment_two
    try:
        return runner(cfg, options=options)
    except SolverError as exc:
        raise SolverError(f"{cfg.kind} experiment (config {cfg.hash()}, seed {cfg.seed}): {exc}", exc.status) from exc


def _fmt(v) -> str:
    return repr(float(v))


def emit_report(record: RunRecord, out_dir, plots: bool = True) -> list[Path]:
    """Write CSV tables, a JSON summary and (optionally) PNG plots named by the config hash."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = record.config_hash
    paths = []

    p = out / f"{stem}_errors.csv"
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", "estimator", "error", "bound", "covered"])
        for name, errs in record.errors.items():
            bound = record.bounds.get(name, math.nan)
            for t, e in enumerate(errs):
                covered = "" if not np.isfinite(bound) else int(e <= bound)
                w.writerow([t, name, _fmt(e), _fmt(bound), covered])
    paths.append(p)

    p = out / f"{stem}_designs.csv"
    cols = ["estimator", "phi_T", "rho", "varsigma", "radicand", "bound", "delta", "epsilon", "mu",
            "ellitope_columns", "polytope_columns", "kappa", "source", "raw_objective"]
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for name, row in record.designs.items():
            w.writerow([name] + [row[c] if isinstance(row[c], (str, int)) else _fmt(row[c]) for c in cols[1:]])
    paths.append(p)

    p = out / f"{stem}_spectra.csv"
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["quantity", "index", "value"])
        for name, vals in record.spectra.items():
            for i, v in enumerate(vals):
                w.writerow([name, i, _fmt(v)])
    paths.append(p)

    p = out / f"{stem}_summary.json"
    summary = {k: v for k, v in record.to_dict().items() if k != "errors"}
    p.write_text(json.dumps(summary, indent=2, sort_keys=True, allow_nan=True))
    paths.append(p)

    if plots:
        paths += _plots(record, out, stem)
    return paths


def error_boxplot(ax, record: RunRecord) -> dict:
    """One box per estimator with its certified bound drawn as a red bar."""
    names = list(record.errors)
    art = ax.boxplot([record.errors[k] for k in names])
    ax.set_xticks(range(1, len(names) + 1), names)
    for i, name in enumerate(names, start=1):
        b = record.bounds.get(name, math.nan)
        if np.isfinite(b):
            ax.hlines(b, i - 0.3, i + 0.3, colors="red")
    ax.set_ylabel("recovery error")
    return art


def _plots(record: RunRecord, out: Path, stem: str) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = []
    sv = {k: v for k, v in record.spectra.items() if k in ("A", "B")}
    if sv:
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for (name, vals), style in zip(sv.items(), ("-", "--")):
            ax.semilogy(np.arange(1, len(vals) + 1), vals, style, label=name)
        ax.set_xlabel("index")
        ax.set_ylabel("singular value")
        ax.legend()
        fig.tight_layout()
        p = out / f"{stem}_singular_values.png"
        fig.savefig(p, dpi=100, metadata={"Software": None})
        plt.close(fig)
        paths.append(p)
    if "U" in record.spectra:
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for name, style in (("U", "--"), ("S", "-."), ("U+S", "-")):
            vals = record.spectra[name]
            ax.plot(np.arange(1, len(vals) + 1), vals, style, label=name)
        ax.set_xlabel("index")
        ax.set_ylabel("eigenvalue")
        ax.legend()
        fig.tight_layout()
        p = out / f"{stem}_eigenvalues.png"
        fig.savefig(p, dpi=100, metadata={"Software": None})
        plt.close(fig)
        paths.append(p)
    if record.errors:
        fig, ax = plt.subplots(figsize=(5, 3.5))
        error_boxplot(ax, record)
        fig.tight_layout()
        p = out / f"{stem}_errors.png"
        fig.savefig(p, dpi=100, metadata={"Software": None})
        plt.close(fig)
        paths.append(p)
    return paths
