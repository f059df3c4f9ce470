import json

import numpy as np

from polyest.cli import main
from polyest.io import read_matrix

INSTANCE = {
    "A": [[1.0, 0.2, 0.0], [0.0, 1.0, 0.1], [0.3, 0.0, 1.0]],
    "B": "identity",
    "ellitope": {"type": "l2-linf", "rho2": 1.0, "rho_inf": 0.8},
    "polytope": {"type": "cross-polytope", "radius": 1.2},
    "noise": {"kind": "gaussian", "sigma": 0.05},
}


def _instance(tmp_path):
    path = tmp_path / "inst.json"
    path.write_text(json.dumps(INSTANCE))
    return path


def test_design_estimate_simulate(tmp_path, capsys):
    inst = _instance(tmp_path)
    bundle = tmp_path / "bundle"
    assert main(["design", str(inst), "--epsilon", "0.01", "--seed", "3", "--out", str(bundle)]) == 0
    sol = json.loads((bundle / "solution.json").read_text())
    assert sol["mode"] == "full" and sol["seed"] == 3
    H = read_matrix(bundle / "H.csv")
    assert H.shape == (3, sol["columns"])
    assert sol["epsilon"] == sol["columns"] * sol["delta"]
    capsys.readouterr()

    x = np.array([0.2, -0.1, 0.3])
    omega = np.array(INSTANCE["A"]) @ x
    assert main(["estimate", str(inst), "--contrast", str(bundle), "--omega", json.dumps(omega.tolist())]) == 0
    out = json.loads(capsys.readouterr().out)
    assert np.allclose(out["x_hat"], x, atol=1e-6)

    sim = tmp_path / "sim"
    assert main(["simulate", str(inst), "--contrast", str(bundle), "--trials", "15", "--out", str(sim)]) == 0
    rows = (sim / "simulation.csv").read_text().splitlines()
    assert rows[0] == "trial,error,bound,covered" and len(rows) == 16
    assert json.loads((sim / "simulation.json").read_text())["trials"] == 15


def test_design_with_explicit_delta_and_mode(tmp_path, capsys):
    inst = _instance(tmp_path)
    out = tmp_path / "p"
    assert main(["design", str(inst), "--delta", "0.001", "--mode", "polytope-only", "--out", str(out)]) == 0
    sol = json.loads((out / "solution.json").read_text())
    assert sol["delta"] == 0.001 and set(sol["provenance"]) == {"polytope-side"}


def test_run_exp(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"kind": "l1-ellitope", "n": 4, "trials": 3}))
    assert main(["run-exp", "--config", str(cfg), "--seed", "9", "--out", str(tmp_path / "r"), "--no-plots"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert set(payload["bounds"]) == {"H", "E", "P"}
    assert any(f.endswith("_errors.csv") for f in payload["files"])


def test_verify_subset(capsys):
    assert main(["verify", "--only", "3"]) == 0
    assert "[PASS]  3" in capsys.readouterr().out


def test_errors_give_nonzero_exit(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"noise": {"kind": "other"}}))
    assert main(["design", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "error" in capsys.readouterr().err
