"""Command-line front end.

Verbs: ``simulate``, ``hypotheses``, ``geometry``, ``solve``, ``verify`` and
``report``.  Every verb that computes something writes the resolved scenario
to ``<out>/scenario.json`` so later verbs can run without ``--config``.

Exit codes: 0 success, 1 configuration or IO error, 2 non-convergence or
residual failure, 3 hypothesis or geometry failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import _io
from .critical_point import (
    find_critical_point,
    mountain_pass_geometry,
    recover_u,
    verify_hypotheses,
)
from .errors import (
    ConfigurationError,
    DirichletError,
    DomainError,
    IntegrationError,
    NumericalError,
    UnsupportedSpecError,
)
from .flow import propagate_orbit, write_paths_csv
from .function_space import SIDE_NAMES, EnsembleProcess
from .impulse_process import (
    _pmap,
    analytic_B_bound,
    estimate_B,
    write_orbits_csv,
)
from .scenario import BUILTIN_SCENARIOS, load_scenario
from .verification import pairing_battery, residuals, write_jump_residuals_csv

__all__ = ["main", "build_parser", "cmd_simulate", "cmd_hypotheses", "cmd_geometry",
           "cmd_solve", "cmd_verify", "cmd_report"]

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_HYPOTHESIS = 0, 1, 2, 3

# Paths are written for at most this many orbits; orbits.csv has all of them.
MAX_PATH_ORBITS = 100


def _scenario(args):
    if args.config is None:
        saved = Path(args.out) / "scenario.json"
        if not saved.exists():
            raise ConfigurationError("--config is required (no scenario.json in the output dir)")
        source = saved
    else:
        source = args.config
    sc = load_scenario(source)
    return sc.with_overrides(seed=args.seed, n_orbits=args.orbits, gtol=args.tol_gtol,
                             workers=args.workers)


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _save_scenario(out: Path, sc):
    # the thread count is an execution detail, kept out so outputs match across it
    d = sc.to_dict()
    d["ensemble"].pop("workers", None)
    _io.write_json(out / "scenario.json", d)


def _log(msg: str):
    print(msg, file=sys.stderr)


# simulate ----------------------------------------------------------------
def _b_summary(sc, orbits) -> dict:
    imp = sc.impulse_spec
    if imp is None:
        masses = [o.jump_mass for o in orbits]
        return {"law": sc.law, "mc_mean": float(np.mean(masses)), "mc_stderr": 0.0,
                "n_orbits": len(orbits), "analytic_bound": masses[0]}
    est = estimate_B(imp, len(orbits), sc.ensemble.seed, sc.ensemble.workers)
    try:
        bound = analytic_B_bound(imp, loose=True)
        tight = analytic_B_bound(imp, loose=False)
    except UnsupportedSpecError:
        bound = tight = None
    return {"law": sc.law, **est.to_dict(), "analytic_bound": bound,
            "analytic_tight_bound": tight}


def cmd_simulate(args) -> int:
    sc = _scenario(args)
    out = _out(args)
    _save_scenario(out, sc)
    orbits = sc.sampled_orbits()
    write_orbits_csv(out / "orbits.csv", orbits)
    spec = sc.hamiltonian
    u0 = np.zeros(sc.dimension)
    paths = _pmap(lambda o: propagate_orbit(spec, u0, o, sc.tolerances.integrator, sc.grid),
                  orbits[:MAX_PATH_ORBITS], sc.ensemble.workers)
    write_paths_csv(out / "paths.csv", paths)
    b = _b_summary(sc, orbits)
    _io.write_json(out / "B.json", b)
    _log(f"simulate: {len(orbits)} orbits, B mc_mean={b['mc_mean']:.6g}")
    return EXIT_OK


# hypotheses / geometry ----------------------------------------------------
def cmd_hypotheses(args) -> int:
    sc = _scenario(args)
    out = _out(args)
    _save_scenario(out, sc)
    rep = verify_hypotheses(sc)
    _io.write_json(out / "hypotheses.json", rep.to_dict())
    _log(f"hypotheses: condition_value={rep.condition_value:.6g} passed={rep.passed}")
    return EXIT_OK if rep.passed else EXIT_HYPOTHESIS


def _write_geometry(out: Path, geo: dict, rim_values):
    _io.write_json(out / "geometry.json", {**geo, "rim_values": list(rim_values)})


def cmd_geometry(args) -> int:
    sc = _scenario(args)
    out = _out(args)
    _save_scenario(out, sc)
    hyp = None
    try:
        hyp = verify_hypotheses(sc)
    except UnsupportedSpecError:
        pass
    geo = mountain_pass_geometry(sc, hypotheses=hyp)
    _write_geometry(out, geo.to_dict(), geo.rim_values)
    _log(f"geometry: rho={geo.rho:.6g} rim_min={geo.rim_lower_bound:.6g} "
         f"chi(v1)={geo.chi_at_v1:.6g} passed={geo.passed}")
    return EXIT_OK if geo.passed else EXIT_HYPOTHESIS


# solve / verify -----------------------------------------------------------
def _solution_rows(v: EnsembleProcess, u: EnsembleProcess):
    for i, (g, V, U) in enumerate(zip(v.grids, v.values, u.values)):
        for t, s, a, b in zip(g.times, g.side, V, U):
            yield (i, t, SIDE_NAMES[int(s)], *a, *b)


def _write_solution(path: Path, v: EnsembleProcess, u: EnsembleProcess):
    d = v.dimension
    header = ("orbit_id", "t", "side", *[f"v{k + 1}" for k in range(d)],
              *[f"u{k + 1}" for k in range(d)])
    _io.write_csv(path, header, _solution_rows(v, u))


def _read_solution(path: Path, sc) -> EnsembleProcess:
    if not path.exists():
        raise ConfigurationError(f"missing {path}; run `solve` first")
    header, rows = _io.read_csv(path)
    d = sc.dimension
    if len(header) != 3 + 2 * d:
        raise ConfigurationError(f"{path} does not match the scenario dimension")
    orbits = sc.solve_orbits()
    grids = sc.grids(orbits)
    per = [[] for _ in grids]
    for row in rows:
        per[int(row[0])].append([float(x) for x in row[3:3 + d]])
    values = []
    for g, vals in zip(grids, per):
        if len(vals) != g.n_nodes:
            raise ConfigurationError(f"{path} does not match the scenario grid")
        values.append(np.array(vals))
    return EnsembleProcess(grids, tuple(values), dirichlet=True)


def _check(sc, v, out: Path):
    """Recover ``u``, compute residuals and the battery, write residual files."""
    rec = recover_u(v, sc.hamiltonian)
    battery = pairing_battery(v, sc, seed=sc.ensemble.seed)
    rep = residuals(rec.u_star, sc, pairing=battery)
    payload = {**rep.to_dict(), "recover_u": rec.to_dict()}
    _io.write_json(out / "residuals.json", payload)
    write_jump_residuals_csv(out / "jump_residuals.csv", rep)
    return rec, rep


def cmd_solve(args) -> int:
    sc = _scenario(args)
    out = _out(args)
    _save_scenario(out, sc)
    hyp = None
    if sc.optimizer.method != "descent":
        hyp = verify_hypotheses(sc)
        _io.write_json(out / "hypotheses.json", hyp.to_dict())
        if not hyp.passed and not args.force:
            _log("solve: hypotheses fail (use --force to run anyway)")
            return EXIT_HYPOTHESIS
    geometry = None
    if sc.optimizer.method != "descent":
        geometry = mountain_pass_geometry(sc, hypotheses=hyp)
        _write_geometry(out, geometry.to_dict(), geometry.rim_values)
        if not geometry.passed and not args.force and sc.optimizer.method == "mountain_pass":
            _log("solve: mountain-pass geometry fails (use --force to run anyway)")
            return EXIT_HYPOTHESIS
    res = find_critical_point(sc, geometry=geometry, force=args.force)
    _io.write_csv(out / "convergence.csv", ("orbit_id", "iteration", "phase", "chi", "gradient_norm"),
                  res.path_history)
    rec, rep = _check(sc, res.v_star, out)
    _write_solution(out / "solution.csv", res.v_star, rec.u_star)
    _io.write_json(out / "result.json", {**res.to_dict(), "gtol": sc.optimizer.gtol,
                                         "residuals_passed": rep.passed})
    ok = res.converged and res.gradient_norm < sc.optimizer.gtol
    _log(f"solve: method={res.method} chi*={res.chi_at_vstar:.6g} "
         f"gradient_norm={res.gradient_norm:.3g} converged={ok} residuals_passed={rep.passed}")
    return EXIT_OK if ok and rep.passed else EXIT_NONCONVERGED


def cmd_verify(args) -> int:
    sc = _scenario(args)
    out = _out(args)
    v = _read_solution(out / "solution.csv", sc)
    _, rep = _check(sc, v, out)
    _log(f"verify: flags={rep.flags()}")
    return EXIT_OK if rep.passed else EXIT_NONCONVERGED


# report ---------------------------------------------------------------------
def _load_json(path: Path):
    return json.loads(path.read_text()) if path.exists() else None


def cmd_report(args) -> int:
    out = Path(args.out)
    names = ("B", "hypotheses", "geometry", "result", "residuals")
    parts = {n: _load_json(out / f"{n}.json") for n in names} if out.is_dir() else {}
    if not any(parts.values()):
        raise ConfigurationError(f"no run artifacts in {out}")
    summary = {"scenario": _load_json(out / "scenario.json")}
    if parts["B"]:
        summary["B"] = {k: parts["B"].get(k) for k in ("mc_mean", "mc_stderr", "analytic_bound")}
    if parts["hypotheses"]:
        h = parts["hypotheses"]
        summary["hypotheses"] = {k: h[k] for k in ("condition_value", "alpha_star", "p", "passed")}
    if parts["geometry"]:
        g = parts["geometry"]
        summary["geometry"] = {k: g[k] for k in ("rho", "rim_lower_bound", "chi_at_v1",
                                                  "e_norm_used", "passed")}
        _io.write_dat(out / "rim.dat", ("sample", "chi"), enumerate(g.get("rim_values", [])))
    if parts["result"]:
        r = parts["result"]
        summary["solve"] = {k: r[k] for k in ("chi_at_vstar", "gradient_norm", "iterations",
                                               "converged", "method", "level_dominates")}
    if parts["residuals"]:
        r = parts["residuals"]
        summary["residuals"] = {k: r[k] for k in ("ode_residual_sup", "jump_residual_max",
                                                   "boundary_residual", "pairing_battery_max",
                                                   "flags", "passed")}
        summary["residuals"]["recover_u_distance"] = r["recover_u"]["distance"]
    conv = out / "convergence.csv"
    if conv.exists():
        _, rows = _io.read_csv(conv)
        _io.write_dat(out / "chi_vs_iteration.dat", ("orbit_id", "iteration", "chi", "gradient_norm"),
                      ((int(a), int(b), float(d), float(e)) for a, b, _, d, e in rows))
    paths = out / "paths.csv"
    if paths.exists():
        header, rows = _io.read_csv(paths)
        _io.write_dat(out / "paths.dat", [h for h in header if h != "side"],
                      ([int(r[0])] + [float(x) for x in r[1:2] + r[3:]] for r in rows))
    _io.write_json(out / "summary.json", summary)
    _log(f"report: wrote {out / 'summary.json'}")
    return EXIT_OK


# entry point ----------------------------------------------------------------
COMMANDS = {
    "simulate": cmd_simulate,
    "hypotheses": cmd_hypotheses,
    "geometry": cmd_geometry,
    "solve": cmd_solve,
    "verify": cmd_verify,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="impulsive-duality",
        description="Dual-action critical points for impulsive Hamiltonian systems.",
        epilog=f"builtin scenarios: {', '.join(sorted(BUILTIN_SCENARIOS))}",
    )
    parser.add_argument("verb", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="builtin scenario name or path to a JSON config")
    parser.add_argument("--out", default="out", help="output directory (default: out)")
    parser.add_argument("--seed", type=int, help="override the ensemble seed")
    parser.add_argument("--orbits", type=int, help="override the number of sampled orbits")
    parser.add_argument("--force", action="store_true",
                        help="solve even when hypotheses or geometry fail")
    parser.add_argument("--tol-gtol", type=float, dest="tol_gtol",
                        help="override the gradient-norm tolerance")
    parser.add_argument("--workers", type=int, help="thread count (results do not depend on it)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.verb](args)
    except (ConfigurationError, UnsupportedSpecError, DomainError, DirichletError, OSError) as exc:
        _log(f"error: {exc}")
        return EXIT_CONFIG
    except (NumericalError, IntegrationError) as exc:
        _log(f"numerical failure: {exc}")
        return EXIT_NONCONVERGED


if __name__ == "__main__":
    sys.exit(main())
