import csv
import json
import subprocess
import sys

import pytest

from impulsive_duality.cli import main


def run(*args):
    return main([str(a) for a in args])


def snapshot(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir()) if p.is_file()}


def test_simulate_outputs(tmp_path):
    assert run("simulate", "--config", "example-4.1", "--orbits", 300, "--out", tmp_path) == 0
    b = json.loads((tmp_path / "B.json").read_text())
    assert b["analytic_bound"] == pytest.approx(4 / 9)
    assert b["n_orbits"] == 300
    rows = list(csv.DictReader((tmp_path / "orbits.csv").open()))
    assert {int(r["orbit_id"]) for r in rows} == set(range(300))
    assert (tmp_path / "paths.csv").exists()
    assert (tmp_path / "scenario.json").exists()


def test_hypotheses_exit_codes(tmp_path):
    assert run("hypotheses", "--config", "example-4.1", "--orbits", 500,
               "--out", tmp_path / "a") == 0
    rep = json.loads((tmp_path / "a" / "hypotheses.json").read_text())
    assert rep["condition_value"] >= 0.08
    assert run("hypotheses", "--config", "example-4.1-x10", "--orbits", 500,
               "--out", tmp_path / "b") == 3


def test_geometry(tmp_path):
    assert run("geometry", "--config", "example-4.1-fixed", "--out", tmp_path) == 0
    geo = json.loads((tmp_path / "geometry.json").read_text())
    assert geo["chi_at_zero"] == 0.0 and geo["rim_lower_bound"] > 0 and geo["chi_at_v1"] < 0


def test_solve_and_verify_quadratic(tmp_path):
    assert run("solve", "--config", "quadratic", "--out", tmp_path) == 0
    for name in ("solution.csv", "convergence.csv", "residuals.json", "result.json"):
        assert (tmp_path / name).exists()
    assert run("verify", "--out", tmp_path) == 0
    assert run("report", "--out", tmp_path) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary


def test_solve_with_impulses_reports_residual_failure(tmp_path):
    assert run("solve", "--config", "example-4.1-fixed", "--out", tmp_path) == 2
    result = json.loads((tmp_path / "result.json").read_text())
    assert result["converged"]
    assert result["gradient_norm"] < 1e-6
    res = json.loads((tmp_path / "residuals.json").read_text())
    assert res["passed"] is False


def test_solve_gated_by_hypotheses(tmp_path):
    assert run("solve", "--config", "example-4.1-x10", "--orbits", 500, "--out", tmp_path) == 3


def test_configuration_errors(tmp_path):
    assert run("verify", "--out", tmp_path / "empty") == 1
    assert run("report", "--out", tmp_path / "empty2") == 1
    assert run("simulate", "--config", "nope", "--out", tmp_path) == 1
    assert run("simulate", "--config", "example-4.1", "--orbits", 0, "--out", tmp_path) == 1
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"horizon": 1.0, "hamiltonian": {"kind": "power"}, "x": 1}))
    assert run("hypotheses", "--config", bad, "--out", tmp_path) == 1


@pytest.mark.parametrize("verb, config, extra", [
    ("simulate", "example-4.1", ["--orbits", 200]),
    ("hypotheses", "example-4.1", ["--orbits", 200]),
    ("geometry", "example-4.1-fixed", []),
    ("solve", "quadratic-impulses", []),
])
def test_outputs_identical_across_runs_and_workers(tmp_path, verb, config, extra):
    a, b = tmp_path / "a", tmp_path / "b"
    code_a = run(verb, "--config", config, "--seed", 11, "--workers", 1, "--out", a, *extra)
    code_b = run(verb, "--config", config, "--seed", 11, "--workers", 3, "--out", b, *extra)
    assert code_a == code_b
    assert snapshot(a) == snapshot(b)


def test_report_is_idempotent(tmp_path):
    run("solve", "--config", "quadratic", "--out", tmp_path)
    run("report", "--out", tmp_path)
    first = snapshot(tmp_path)
    run("report", "--out", tmp_path)
    assert snapshot(tmp_path) == first


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "impulsive_duality", "hypotheses",
                           "--config", "quadratic", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 3
    assert (tmp_path / "hypotheses.json").exists()
