"""Command-line entry point: ``polyest {design,estimate,simulate,run-exp,verify}``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from polyest.design import MODES, assemble_contrast, solve_master
from polyest.errors import SolverError
from polyest.estimator import PolyhedralEstimator, monte_carlo_risk
from polyest.experiments import ExperimentConfig, emit_report, run_experiment
from polyest.io import load_contrast, load_instance, read_matrix, write_design_bundle
from polyest.noise import sample_gaussian, sample_mixture


def _print_json(payload) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True))


def cmd_design(args) -> int:
    inst = load_instance(args.instance)
    delta = args.delta if args.delta is not None else args.epsilon / inst.capacity
    problem = inst.problem(delta, args.theta)
    sol = solve_master(problem, args.mode)
    contrast = assemble_contrast(sol, problem.noise, np.random.default_rng(args.seed))
    payload = write_design_bundle(args.out, sol, contrast, {"seed": args.seed, "instance": str(args.instance)})
    _print_json({k: payload[k] for k in ("mode", "delta", "epsilon", "bound", "radicand", "columns")})
    return 0


def _omega(value: str) -> np.ndarray:
    p = Path(value)
    if p.exists():
        return read_matrix(p).ravel()
    return np.asarray(json.loads(value), dtype=float).ravel()


def cmd_estimate(args) -> int:
    inst = load_instance(args.instance)
    H = load_contrast(args.contrast)
    res = PolyhedralEstimator(H, inst.signal, inst.A, inst.B)(_omega(args.omega))
    _print_json({"x_hat": res.x_hat.tolist(), "w_hat": res.w_hat.tolist(), "residual": res.residual})
    return 0


def cmd_simulate(args) -> int:
    inst = load_instance(args.instance)
    bundle = Path(args.contrast)
    H = load_contrast(bundle)
    meta = json.loads((bundle / "solution.json").read_text()) if bundle.is_dir() else {}
    bound = float(meta.get("bound", np.nan))
    theta = float(meta.get("theta", inst.theta))
    epsilon = args.epsilon if args.epsilon is not None else float(meta.get("epsilon", 0.01))
    if inst.mixture is not None:
        sampler = lambda x, r: sample_mixture(inst.mixture, x, r)
    else:
        sigma = float(inst.noise_spec["sigma"])
        sampler = lambda x, r: sample_gaussian(x, inst.A, sigma, r)
    est = PolyhedralEstimator(H, inst.signal, inst.A, inst.B)
    reports = monte_carlo_risk(
        inst.signal, inst.A, inst.B, sampler, {"H": lambda om: est(om).x_hat}, {"H": bound},
        args.trials, theta, epsilon, args.seed, contrasts={"H": H},
    )
    rep = reports["H"]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "simulation.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", "error", "bound", "covered"])
        for t, e in enumerate(rep.errors):
            w.writerow([t, repr(float(e)), repr(bound), int(e <= bound) if np.isfinite(bound) else ""])
    summary = {
        "trials": rep.trials,
        "seed": args.seed,
        "epsilon": epsilon,
        "theta": theta,
        "bound": bound,
        "quantile": rep.quantile,
        "exceed_fraction": rep.exceed_fraction,
        "implication_violations": rep.implication_violations(),
    }
    (out / "simulation.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    _print_json(summary)
    return 0


def cmd_run_exp(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    out = args.out or cfg.out
    cfg.out = str(out)
    record = run_experiment(cfg)
    paths = emit_report(record, out, plots=not args.no_plots)
    _print_json({"config_hash": record.config_hash, "bounds": record.bounds, "files": [str(p) for p in paths]})
    return 0


def cmd_verify(args) -> int:
    from polyest.acceptance import run_all

    results = run_all(args.only)
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polyest", description="Polyhedral estimate design and validation.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", help="solve a design program and write a JSON+CSV bundle")
    p.add_argument("instance", type=Path)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--delta", type=float)
    g.add_argument("--epsilon", type=float, default=0.01, help="target level; delta = epsilon/(M+J)")
    p.add_argument("--theta", type=float)
    p.add_argument("--mode", choices=MODES, default="full")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("estimate", help="polyhedral estimate for one observation")
    p.add_argument("instance", type=Path)
    p.add_argument("--contrast", required=True, help="bundle directory or H.csv")
    p.add_argument("--omega", required=True, help="CSV file or JSON list")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("simulate", help="Monte-Carlo risk of a designed estimate")
    p.add_argument("instance", type=Path)
    p.add_argument("--contrast", required=True, help="bundle directory written by 'design'")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("run-exp", help="run a configured experiment and emit its report")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path)
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_run_exp)

    p = sub.add_parser("verify", help="run the acceptance checks")
    p.add_argument("--only", type=int, nargs="*", help="criterion numbers to run")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (SolverError, ValueError, OSError) as exc:
        print(f"polyest: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
