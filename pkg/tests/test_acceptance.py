"""Acceptance suite: one test per primary criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` or ``python tests/test_acceptance.py``.
"""

import json
import math
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import random_dirichlet  # noqa: E402
from impulsive_duality.cli import main  # noqa: E402
from impulsive_duality.critical_point import (  # noqa: E402
    descent_loop,
    find_critical_point,
    mountain_pass_geometry,
    recover_u,
)
from impulsive_duality.dual_action import build_functionals, chi, chi_pairing  # noqa: E402
from impulsive_duality.flow import first_return_time  # noqa: E402
from impulsive_duality.function_space import (  # noqa: E402
    EnsembleProcess,
    OrbitGrid,
    expectation_cs_check,
    pc_norm,
)
from impulsive_duality.hamiltonian import (  # noqa: E402
    PowerLaw,
    alpha_star,
    check_duality_inequalities,
    conjugate_exponent,
)
from impulsive_duality.impulse_process import (  # noqa: E402
    analytic_B_bound,
    estimate_B,
    sample_orbits,
)
from impulsive_duality.scenario import builtin  # noqa: E402
from impulsive_duality.verification import pairing_battery, residuals  # noqa: E402


_CAPTURE = {}


@pytest.fixture(autouse=True)
def _show_verdicts(capsys):
    _CAPTURE["capsys"] = capsys
    yield
    _CAPTURE.clear()


def _emit(line):
    capsys = _CAPTURE.get("capsys")
    if capsys is None:
        print(line, flush=True)
        return
    with capsys.disabled():
        print("\n" + line, flush=True)


class Verdict:
    """Records checks for one criterion and prints a single summary line."""

    def __init__(self, number, title):
        self.number, self.title = number, title
        self.failures, self.details = [], []
        self.start = time.perf_counter()

    def check(self, ok, label):
        self.details.append(label)
        if not ok:
            self.failures.append(label)

    def finish(self, budget=None):
        elapsed = time.perf_counter() - self.start
        if budget is not None:
            self.check(elapsed < budget, f"runtime {elapsed:.2f} s < {budget} s")
        status = "PASS" if not self.failures else "FAIL"
        shown = self.failures or self.details
        line = f"[{status}] #{self.number:02d} {self.title} ({elapsed:.2f} s): " + "; ".join(shown)
        _emit(line)
        assert not self.failures, line


def test_01_power_law_constants():
    v = Verdict(1, "power-law constants")
    a = alpha_star(1.0, 10.0)
    v.check(0.6955 <= a <= 0.6975, f"alpha* = {a:.6f} in [0.6955, 0.6975]")
    p = conjugate_exponent(10.0)
    v.check(abs(p - 10 / 9) <= 1e-15, f"p = {p!r}")
    back = conjugate_exponent(p)
    v.check(abs(back - 10.0) <= 1e-15 * 10, f"q round trip = {back!r}")
    v.check(abs(1 / p + 1 / back - 1) <= 1e-15, "1/p + 1/q = 1")
    bound = analytic_B_bound(builtin("example-4.1").impulse_spec)
    v.check(bound == float(Fraction(4, 9)), f"analytic B bound = {bound!r} == 4/9")
    v.finish(budget=1.0)


def test_02_impulse_times():
    v = Verdict(2, "impulse times bounded and increasing")
    sc = builtin("example-4.1")
    orbits = sample_orbits(sc.impulse_spec, 100_000, sc.ensemble.seed, workers=4)
    over = sum(int(np.any(o.times >= 1.0)) for o in orbits)
    flat = sum(int(np.any(np.diff(o.times) <= 0)) for o in orbits)
    v.check(len(orbits) == 100_000, f"{len(orbits)} orbits")
    v.check(over == 0, f"{over} orbits with xi_j >= 1")
    v.check(flat == 0, f"{flat} orbits not strictly increasing")
    v.finish(budget=60.0)


def test_03_B_monte_carlo():
    v = Verdict(3, "B Monte Carlo")
    sc = builtin("example-4.1")
    est = estimate_B(sc.impulse_spec, 100_000, sc.ensemble.seed, workers=4)
    exact = 4 / 49
    z = abs(est.mc_mean - exact) / est.mc_stderr
    v.check(z <= 3, f"mean {est.mc_mean:.6f} vs 4/49 = {exact:.6f}, {z:.2f} stderr")
    v.check(est.mc_mean <= 4 / 9, "mean <= 4/9")
    v.finish(budget=60.0)


def test_04_period_law():
    v = Verdict(4, "period law")
    spec = PowerLaw(1.0, 10.0)
    for r in (0.8, 1.0, 1.2):
        measured = first_return_time(spec, np.array([r, 0.0]))
        expected = math.pi / 5 * r**-8
        rel = abs(measured - expected) / expected
        v.check(rel < 1e-4, f"r={r}: rel err {rel:.1e}")
    v.finish(budget=30.0)


def test_05_legendre_duality():
    v = Verdict(5, "Legendre duality")
    rng = np.random.default_rng(2024)
    for q in (4.0, 10.0):
        spec = PowerLaw(1.0, q)
        u = rng.standard_normal((1000, 2)) * rng.uniform(0.1, 2.0, (1000, 1))
        g = spec.grad(0.0, u)
        val, back = spec.conjugate(0.0, g)
        rt = np.max(np.linalg.norm(back - u, axis=1) / np.linalg.norm(u, axis=1))
        v.check(rt < 1e-8, f"q={q:g}: round trip {rt:.1e}")
        lhs = spec.value(0.0, u) + val
        rhs = np.einsum("ij,ij->i", u, g)
        fy = np.max(np.abs(lhs - rhs) / np.maximum(1.0, np.abs(rhs)))
        v.check(fy < 1e-8, f"q={q:g}: Fenchel-Young {fy:.1e}")
        rep = check_duality_inequalities(spec, 10_000, seed=int(q))
        worst = min(rep.slacks().values())
        v.check(rep.passed(1e-10), f"q={q:g}: min slack {worst:.1e}")
    v.finish(budget=1.0)


def test_06_derivative_oracle():
    v = Verdict(6, "derivative oracle")
    for name in ("example-4.1-free", "example-4.1-fixed"):
        sc = builtin(name)
        orbits = sc.solve_orbits()
        grids = sc.grids(orbits)
        rng = np.random.default_rng(6)
        x = random_dirichlet(grids, rng)
        worst = 0.0
        for _ in range(20):
            h = random_dirichlet(grids, rng)
            pr = chi_pairing(x, h, sc.hamiltonian, orbits)

            def f(s):
                return chi(x + s * h, sc.hamiltonian, orbits, with_gradient=False).chi_value

            eps = 1e-4
            fd = (8 * (f(eps) - f(-eps)) - (f(2 * eps) - f(-2 * eps))) / (12 * eps)
            worst = max(worst, abs(fd - pr) / abs(pr))
        n_imp = len(grids[0].impulse_times)
        v.check(worst < 1e-5, f"{name} ({n_imp} impulses): max rel err {worst:.1e}")
    v.finish(budget=60.0)


def test_07_expectation_cauchy_schwarz():
    v = Verdict(7, "expectation Cauchy-Schwarz")
    rng = np.random.default_rng(7)
    grid = OrbitGrid(1.0)
    worst = math.inf
    for _ in range(1000):
        m = int(rng.integers(1, 6))
        x = EnsembleProcess([grid] * m, tuple(rng.standard_normal((grid.n_nodes, 2)) for _ in range(m)))
        y = EnsembleProcess([grid] * m, tuple(rng.standard_normal((grid.n_nodes, 2)) for _ in range(m)))
        worst = min(worst, expectation_cs_check(x, y))
    v.check(worst >= -1e-12, f"min slack {worst:.2e} over 1000 ensembles")
    v.finish(budget=1.0)


def test_08_hypothesis_gate(tmp_path):
    v = Verdict(8, "hypothesis gate")
    code = main(["hypotheses", "--config", "example-4.1", "--out", str(tmp_path / "a")])
    rep = json.loads((tmp_path / "a" / "hypotheses.json").read_text())
    v.check(code == 0 and rep["passed"], f"example-4.1 exit {code}")
    v.check(rep["condition_value"] >= 0.08, f"condition value {rep['condition_value']:.4f}")
    code = main(["hypotheses", "--config", "example-4.1-x10", "--out", str(tmp_path / "b")])
    rep = json.loads((tmp_path / "b" / "hypotheses.json").read_text())
    v.check(code == 3 and not rep["passed"],
            f"x10 variant exit {code}, condition value {rep['condition_value']:.4f}")
    v.finish(budget=60.0)


def test_09_mountain_pass_geometry():
    v = Verdict(9, "mountain-pass geometry")
    sc = builtin("example-4.1-fixed")
    geo = mountain_pass_geometry(sc)
    v.check(geo.chi_at_zero == 0.0, f"chi(0) = {geo.chi_at_zero}")
    v.check(geo.rim_samples >= 200 and geo.rim_lower_bound > 0,
            f"rim rho={geo.rho:.4f}: min chi {geo.rim_lower_bound:.4f} over {geo.rim_samples}")
    v.check(geo.chi_at_v1 < 0 and math.isfinite(geo.e_norm_used),
            f"chi(v1) = {geo.chi_at_v1:.3f} at |e| = {geo.e_norm_used:.3f}")
    orbits = sc.solve_orbits()
    grids = sc.grids(orbits)
    e = np.asarray(geo.e_direction)
    vals = [chi(descent_loop(grids, sc.horizon, geo.e_norm_used * 2**k * e), sc.hamiltonian,
                orbits, with_gradient=False).chi_value for k in range(6)]
    v.check(all(b < a for a, b in zip(vals, vals[1:])),
            "chi decreases over 5 doublings of |e|: " + ", ".join(f"{x:.3g}" for x in vals))
    v.finish(budget=60.0)


_SOLVED = {}


def quadratic_solution():
    if not _SOLVED:
        sc = builtin("quadratic")
        _SOLVED["quadratic"] = (sc, find_critical_point(sc))
    return _SOLVED["quadratic"]


def test_10_solver_oracle():
    v = Verdict(10, "solver oracle")
    sc, res = quadratic_solution()
    v.check(res.gradient_norm < 1e-6, f"gradient norm {res.gradient_norm:.1e}")
    orbits = sc.solve_orbits()
    f = build_functionals(res.v_star.grids, sc.hamiltonian, orbits, sc.dimension)[0]
    x0 = f.zeros()
    direct = f.to_nodes(x0 + np.linalg.solve(f.hessian(x0), -f.gradient(x0).ravel())
                        .reshape(x0.shape))
    u_direct = recover_u(res.v_star.with_values([direct]), sc.hamiltonian).u_star
    ru = recover_u(res.v_star, sc.hamiltonian)
    gap = pc_norm(ru.u_star - u_direct)
    v.check(gap < 1e-4, f"PC distance to direct solve {gap:.1e}")
    rep = residuals(ru.u_star, sc, pairing=pairing_battery(res.v_star, sc))
    v.check(rep.passed, f"residuals ode {rep.ode_residual_sup:.1e}, "
                        f"jump {rep.jump_residual_max:.1e}, boundary {rep.boundary_residual:.1e}")
    v.finish(budget=60.0)


def test_11_consistency():
    v = Verdict(11, "critical-point consistency")
    sc, res = quadratic_solution()
    gtol = sc.optimizer.gtol
    base = pairing_battery(res.v_star, sc)
    v.check(base < 10 * gtol, f"battery {base:.1e} < {10 * gtol:.0e}")
    dist = recover_u(res.v_star, sc.hamiltonian).distance
    v.check(dist < 1e-3, f"candidate distance {dist:.1e}")
    mode = EnsembleProcess.from_function(
        res.v_star.grids, lambda t: np.outer(np.sin(np.pi * np.asarray(t)), [1.0, 0.0]),
        dirichlet=True)
    bumped = pairing_battery(res.v_star + 0.1 * mode, sc)
    v.check(bumped >= 10 * base, f"perturbed battery {bumped:.2e} >= 10 x {base:.1e}")
    v.finish(budget=60.0)


VERBS = [
    ("simulate", "example-4.1", ["--orbits", "500"]),
    ("hypotheses", "example-4.1", ["--orbits", "500"]),
    ("geometry", "example-4.1-fixed", []),
    ("solve", "example-4.1-fixed", []),
    ("verify", None, []),
    ("report", None, []),
]


def test_12_determinism(tmp_path):
    v = Verdict(12, "determinism")
    runs = {}
    for label, workers in (("a", 1), ("b", 1), ("c", 3)):
        out = tmp_path / label
        codes = []
        for verb, config, extra in VERBS:
            argv = [verb, "--out", str(out), "--seed", "3", "--workers", str(workers), *extra]
            if config:
                argv += ["--config", config]
            codes.append(main(argv))
        files = {p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.is_file()}
        runs[label] = (codes, files)
    codes, files = runs["a"]
    v.check(len(files) >= 10, f"{len(files)} output files, exit codes {codes}")
    for label in ("b", "c"):
        same = runs[label] == runs["a"]
        v.check(same, f"run {label} identical" if same else f"run {label} differs")
    v.finish()


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
