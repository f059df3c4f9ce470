import json
import math

import numpy as np
import pytest

from polyest.experiments import (
    ExperimentConfig,
    RunRecord,
    emit_report,
    error_boxplot,
    random_matrix,
    run_experiment,
    run_experiment_one,
    run_experiment_two,
)


def _strip_timing(record):
    d = record.to_dict()
    d.pop("timing")
    return d


@pytest.fixture(scope="module")
def record_one():
    return run_experiment_one(ExperimentConfig(n=6, trials=12, seed=5))


@pytest.fixture(scope="module")
def record_two():
    return run_experiment_two(ExperimentConfig(kind="mixture", n=4, trials=12, seed=5))


def test_random_matrix_condition_number(rng):
    for shape, cond in (((8, 8), 1e3), ((14, 8), 8.0), ((5, 9), 20.0)):
        M = random_matrix(*shape, cond, rng)
        s = np.linalg.svd(M, compute_uv=False)
        assert M.shape == shape
        assert s[0] == pytest.approx(1.0) and s[0] / s[-1] == pytest.approx(cond, rel=1e-9)


def test_config_defaults_and_validation():
    c = ExperimentConfig()
    assert (c.m, c.nu, c.theta, c.rho2, c.rho_inf) == (16, 30, 2.0, 8.5, 7.0)
    m = ExperimentConfig(kind="mixture", n=8)
    assert (m.d, m.theta, m.rho2, m.rho_inf) == (8, 1.0, 1.0, 0.5)
    assert ExperimentConfig(kind="mixture", n=8, rho2=8.5).rho2 == 8.5
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"kind": "l1-ellitope", "bogus": 1})
    with pytest.raises(ValueError):
        ExperimentConfig(kind="other")
    with pytest.raises(ValueError):
        ExperimentConfig(epsilon=1.5)


def test_config_hash_depends_on_seed_not_output_dir():
    a = ExperimentConfig(seed=1, out="x")
    assert a.hash() == ExperimentConfig(seed=1, out="y").hash()
    assert a.hash() != ExperimentConfig(seed=2).hash()


@pytest.mark.parametrize("name", ["record_one", "record_two"])
def test_bound_and_epsilon_bookkeeping(name, request):
    record = request.getfixturevalue(name)
    target = record.config["epsilon"]
    for est, row in record.designs.items():
        recomputed = 2 * math.sqrt(row["phi_T"] + row["rho"] + row["varsigma"])
        assert abs(recomputed - row["bound"]) <= 1e-12 * max(1.0, row["bound"])
        assert row["epsilon"] == row["mu"] * row["delta"]
        assert row["epsilon"] <= target * (1 + 1e-12)
        assert row["mu"] == row["ellitope_columns"] + row["polytope_columns"]
        assert record.bounds[est] == row["bound"]


@pytest.mark.parametrize("name", ["record_one", "record_two"])
def test_full_design_dominates(name, request):
    b = request.getfixturevalue(name).bounds
    assert b["H"] <= min(b["E"], b["P"]) + 1e-6


def test_experiment_one_contents(record_one):
    assert set(record_one.errors) == {"H", "E", "P", "LS"}
    assert all(len(v) == 12 for v in record_one.errors.values())
    assert all(math.isfinite(b) for b in record_one.bounds.values())
    assert len(record_one.spectra["A"]) == 6
    s = np.array(record_one.spectra["A"])
    assert s[0] / s[-1] == pytest.approx(1e3)
    assert {"U", "S", "U+S"} <= set(record_one.spectra)
    for name in ("H", "E", "P"):
        assert record_one.risk[name]["implication_violations"] == 0


def test_experiment_two_contents(record_two):
    assert set(record_two.errors) == {"H", "E", "P"}
    assert record_two.designs["H"]["kappa"] > 1
    assert all(np.isfinite(record_two.errors["H"]))


def test_determinism_excluding_timing(record_one):
    again = run_experiment_one(record_one.rerun_config())
    assert _strip_timing(again) == _strip_timing(record_one)


def test_zero_trials_gives_design_only_record():
    rec = run_experiment(ExperimentConfig(n=4, trials=0, seed=1))
    assert rec.errors == {} and rec.risk == {}
    assert set(rec.bounds) == {"H", "E", "P"}


def test_uniform_mixture_signal_end_to_end():
    from polyest.design import assemble_contrast, solve_master
    from polyest.estimator import PolyhedralEstimator
    from polyest.experiments import mixture_instance, mixture_problem
    from polyest.noise import sample_mixture

    cfg = ExperimentConfig(kind="mixture", n=4, trials=0)
    rng = np.random.default_rng(0)
    model = mixture_instance(cfg, rng)
    problem = mixture_problem(model, 1.0, 0.5, 0.01 / 8)
    H = assemble_contrast(solve_master(problem), problem.noise, rng)
    x = np.full(4, 0.25)
    est = PolyhedralEstimator(H, problem.signal, model.A, np.eye(4))
    err = np.abs(est(sample_mixture(model, x, rng)).x_hat - x).sum()
    assert math.isfinite(err)


def test_emit_report_files_and_byte_identity(tmp_path, record_one):
    p1 = emit_report(record_one, tmp_path / "a")
    rerun = run_experiment_one(record_one.rerun_config())
    p2 = emit_report(rerun, tmp_path / "b")
    assert [p.name for p in p1] == [p.name for p in p2]
    assert all(p.name.startswith(record_one.config_hash) for p in p1)
    for a, b in zip(p1, p2):
        if a.suffix == ".csv":
            assert a.read_bytes() == b.read_bytes()
    assert {p.suffix for p in p1} == {".csv", ".json", ".png"}
    summary = json.loads((tmp_path / "a" / f"{record_one.config_hash}_summary.json").read_text())
    assert summary["config"]["seed"] == 5


def test_empty_record_gives_header_only_csv(tmp_path):
    rec = RunRecord({}, "empty")
    paths = emit_report(rec, tmp_path)
    errors = next(p for p in paths if p.name == "empty_errors.csv")
    assert errors.read_text() == "trial,estimator,error,bound,covered\n"


def test_boxplot_has_one_group_per_estimator():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rec = RunRecord({}, "x", errors={"H": [1.0, 2.0], "E": [1.5], "P": [0.5, 0.7]}, bounds={"H": 3.0, "E": 4.0, "P": 3.5})
    fig, ax = plt.subplots()
    art = error_boxplot(ax, rec)
    plt.close(fig)
    assert len(art["boxes"]) == 3


def test_record_roundtrip(record_two):
    back = RunRecord.from_dict(json.loads(json.dumps(record_two.to_dict())))
    assert back.config_hash == record_two.config_hash
    assert back.rerun_config() == ExperimentConfig.from_dict(record_two.config)
