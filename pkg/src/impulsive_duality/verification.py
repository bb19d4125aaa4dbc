"""Residual checks for candidate mild solutions and the criticality battery."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._io import write_csv
from .dual_action import chi_pairing, orbit_jumps
from .function_space import EnsembleProcess, inner_product, trial_function
from .hamiltonian import apply_j
from .scenario import Tolerances, load_scenario

__all__ = [
    "ResidualReport",
    "residuals",
    "pairing_battery",
    "paths_to_process",
    "write_jump_residuals_csv",
]


@dataclass(frozen=True)
class ResidualReport:
    """ODE, jump, boundary and pairing residuals with their thresholds.

    ``jump_residuals[i][j]`` is ``|u(xi_j^+) - (u(xi_j^-) + b_j)|`` on orbit
    ``i``; ``pairing`` is the battery maximum when one was run.
    """

    ode_residual_sup: float
    jump_residuals: tuple
    boundary_residual: float
    per_orbit: tuple
    thresholds: dict
    pairing: Optional[float] = None
    impulse_times: tuple = field(default=(), repr=False)

    @property
    def jump_residual_max(self) -> float:
        vals = [x for row in self.jump_residuals for x in row]
        return max(vals) if vals else 0.0

    def flags(self) -> dict:
        t = self.thresholds
        out = {
            "ode": self.ode_residual_sup < t["ode"],
            "jump": self.jump_residual_max < t["jump"],
            "boundary": self.boundary_residual < t["boundary"],
        }
        if self.pairing is not None:
            out["pairing"] = self.pairing < t["pairing"]
        return out

    @property
    def passed(self) -> bool:
        return all(self.flags().values())

    def to_dict(self):
        return {
            "ode_residual_sup": self.ode_residual_sup,
            "jump_residual_max": self.jump_residual_max,
            "jump_residuals": [list(r) for r in self.jump_residuals],
            "boundary_residual": self.boundary_residual,
            "pairing_battery_max": self.pairing,
            "per_orbit": list(self.per_orbit),
            "thresholds": dict(self.thresholds),
            "flags": self.flags(),
            "passed": self.passed,
        }


def _thresholds(tol: Tolerances) -> dict:
    return {"ode": tol.ode, "jump": tol.jump, "boundary": tol.boundary, "pairing": tol.pairing}


def _orbits_for(sc, u: EnsembleProcess, orbits):
    if orbits is not None:
        return list(orbits)
    solve = sc.solve_orbits()
    if len(solve) == u.n_orbits:
        return solve
    return sc.sampled_orbits(u.n_orbits)


def residuals(u: EnsembleProcess, scenario, orbits=None, pairing: Optional[float] = None
              ) -> ResidualReport:
    """Measure how far ``u`` is from a mild solution of the scenario.

    The ODE residual ``|Du - J grad H(t, u)|`` uses the segmentwise
    derivative of :func:`~impulsive_duality.function_space.derivative` and is
    taken over nodes strictly inside their segment.
    """
    sc = load_scenario(scenario)
    spec = sc.hamiltonian
    orbits = _orbits_for(sc, u, orbits)
    ode_all, jumps_all, bnd_all, per, times = [], [], [], [], []
    for i, (g, U, o) in enumerate(zip(u.grids, u.values, orbits)):
        b = orbit_jumps(g, o).reshape(-1, U.shape[1])
        inner = np.ones(g.n_nodes, dtype=bool)
        for a, z in g.segments:
            inner[a] = inner[z - 1] = False
        res = g.diff @ U - apply_j(np.asarray(spec.grad(g.times, U), dtype=float))
        ode = float(np.max(np.linalg.norm(res[inner], axis=1))) if inner.any() else 0.0
        if len(b):
            jr = np.linalg.norm(U[g.right_nodes] - (U[g.left_nodes] + b), axis=1)
        else:
            jr = np.zeros(0)
        bnd = float(np.linalg.norm(U[0]) + np.linalg.norm(U[-1]))
        ode_all.append(ode)
        jumps_all.append(tuple(float(x) for x in jr))
        bnd_all.append(bnd)
        times.append(tuple(g.impulse_times.tolist()))
        per.append({"orbit": i, "ode": ode, "jump_max": float(jr.max()) if len(jr) else 0.0,
                    "boundary": bnd})
    return ResidualReport(max(ode_all), tuple(jumps_all), max(bnd_all), tuple(per),
                          _thresholds(sc.tolerances), pairing, tuple(times))


def pairing_battery(v: EnsembleProcess, scenario, n_tests: Optional[int] = None, seed: int = 0,
                    orbits=None) -> float:
    """``max_i |(chi'(v), h_i)|`` over random sine-series test functions.

    Each ``h_i`` vanishes at ``0`` and ``T`` and is scaled to unit norm in
    the ensemble ``L2`` product.
    """
    sc = load_scenario(scenario)
    n_tests = sc.tolerances.battery_tests if n_tests is None else n_tests
    orbits = _orbits_for(sc, v, orbits)
    worst = 0.0
    for i in range(n_tests):
        rng = np.random.default_rng([int(seed) % 2**63, 5, i])
        h = EnsembleProcess.from_function(
            v.grids, trial_function("sine", rng, sc.horizon, v.dimension), dirichlet=True)
        h = (1.0 / math.sqrt(inner_product(h, h))) * h
        worst = max(worst, abs(chi_pairing(v, h, sc.hamiltonian, orbits)))
    return worst


def paths_to_process(paths) -> EnsembleProcess:
    """Collect :class:`~impulsive_duality.flow.PiecewisePath` objects into a process."""
    paths = list(paths)
    return EnsembleProcess(tuple(p.grid for p in paths), tuple(p.values for p in paths))


def write_jump_residuals_csv(path, report: ResidualReport):
    rows = (
        (i, j + 1, report.impulse_times[i][j] if report.impulse_times else math.nan, r)
        for i, row in enumerate(report.jump_residuals)
        for j, r in enumerate(row)
    )
    return write_csv(path, ("orbit_id", "j", "xi", "residual"), rows)
