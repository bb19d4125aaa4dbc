"""Hamiltonian flow between impulses and piecewise trajectories.

Between impulse times the state follows ``u' = J grad H(t, u)``; at each
impulse time the state jumps by the orbit's ``Delta_j``.  Paths live on an
:class:`~impulsive_duality.function_space.OrbitGrid`, whose impulse times are
doubled nodes carrying the left and right limits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from ._io import write_csv
from .errors import ConfigurationError, IntegrationError
from .function_space import SIDE_NAMES, GridSpec, OrbitGrid, coarsen_orbit
from .hamiltonian import apply_j
from .impulse_process import SampleOrbit

__all__ = [
    "SegmentResult",
    "PiecewisePath",
    "integrate_segment",
    "propagate_orbit",
    "energy_drift",
    "first_return_time",
    "path_rows",
    "write_paths_csv",
]


def _field(spec):
    def rhs(t, u):
        return apply_j(spec.grad(t, u))

    return rhs


@dataclass(frozen=True)
class SegmentResult:
    """States at the requested times of one segment plus integrator statistics."""

    times: np.ndarray
    states: np.ndarray
    nfev: int
    energy_change: Optional[float]
    method: str


def _midpoint(spec, u0, times, max_step, tol, max_iter=100):
    """Fixed-step implicit midpoint rule, solved by fixed-point iteration."""
    rhs = _field(spec)
    out = [np.array(u0, dtype=float)]
    u = out[0].copy()
    nfev = 0
    for a, b in zip(times[:-1], times[1:]):
        steps = max(1, math.ceil((b - a) / max_step))
        h = (b - a) / steps
        for k in range(steps):
            t = a + (k + 0.5) * h
            nxt = u + h * rhs(t, u)
            for _ in range(max_iter):
                new = u + h * rhs(t, 0.5 * (u + nxt))
                nfev += 1
                done = np.linalg.norm(new - nxt) <= tol * (1.0 + np.linalg.norm(new))
                nxt = new
                if done:
                    break
            else:
                raise IntegrationError("implicit midpoint iteration did not converge",
                                       last_good_time=a + k * h, step=h)
            if not np.all(np.isfinite(nxt)):
                raise IntegrationError("non-finite state", last_good_time=a + k * h)
            u = nxt
        out.append(u.copy())
    return np.array(out), nfev


def integrate_segment(spec, u0, t0: float, t1: float, tol: float = 1e-10, times=None,
                      method: str = "rk45", max_step: Optional[float] = None) -> SegmentResult:
    """Integrate ``u' = J grad H(t, u)`` on ``[t0, t1]``.

    Parameters
    ----------
    spec : Hamiltonian
        Anything with ``grad(t, u)``; ``value`` is used for the energy report.
    u0 : array_like
        State at ``t0``.
    tol : float
        Relative tolerance; the absolute tolerance is ``tol * 1e-2``.
    times : array_like, optional
        Output times in ``[t0, t1]`` (default: just the end points).
    method : {"rk45", "midpoint"}
        Adaptive Dormand-Prince 4(5) or fixed-step implicit midpoint.
    max_step : float, optional
        Step size of the midpoint rule (default ``(t1 - t0) / 1000``).

    Raises
    ------
    IntegrationError
        When the step size underflows, with the last time reached.
    """
    if not t1 > t0:
        raise ConfigurationError("need t0 < t1")
    if not tol > 0:
        raise ConfigurationError("tol must be positive")
    u0 = np.asarray(u0, dtype=float)
    times = np.array([t0, t1] if times is None else times, dtype=float)
    if method == "rk45":
        # dense output (rather than t_eval) keeps the accepted steps, so a
        # failure can report how far the integration got
        sol = solve_ivp(_field(spec), (t0, t1), u0, method="RK45", dense_output=True,
                        rtol=tol, atol=tol * 1e-2)
        if sol.status != 0:
            raise IntegrationError(sol.message, last_good_time=float(sol.t[-1]), nfev=sol.nfev)
        states, nfev = sol.sol(times).T.copy(), int(sol.nfev)
        states[0] = u0
    elif method == "midpoint":
        states, nfev = _midpoint(spec, u0, times, max_step or (t1 - t0) / 1000, tol)
    else:
        raise ConfigurationError(f"unknown integration method {method!r}")
    change = None
    if getattr(spec, "autonomous", True):
        change = float(abs(spec.value(t1, states[-1]) - spec.value(t0, u0)))
    return SegmentResult(times, states, nfev, change, method)


@dataclass
class PiecewisePath:
    """A trajectory on an impulse-aware grid.

    ``values[grid.right_nodes[j]]`` is computed as
    ``values[grid.left_nodes[j]] + jumps[j]`` in floating point.
    """

    grid: OrbitGrid
    values: np.ndarray
    jumps: np.ndarray
    orbit_index: int = 0
    stats: list = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def left_values(self) -> np.ndarray:
        return self.values[self.grid.left_nodes]

    def right_values(self) -> np.ndarray:
        return self.values[self.grid.right_nodes]


def propagate_orbit(spec, u0, orbit: SampleOrbit, tol: float = 1e-10,
                    grid: Optional[GridSpec] = None, method: str = "rk45") -> PiecewisePath:
    """Initial-value propagation through every impulse of ``orbit``.

    The boundary condition ``u(T) = 0`` is not imposed.  Impulses closer
    than the grid's merge gap are combined first (see
    :func:`~impulsive_duality.function_space.coarsen_orbit`).
    """
    orbit = coarsen_orbit(orbit, grid)
    og = OrbitGrid(orbit.horizon, orbit.times, grid)
    u = np.asarray(u0, dtype=float)
    values = np.empty((og.n_nodes, u.shape[0]))
    stats = []
    for s, (a, b) in enumerate(og.segments):
        if s > 0:
            u = values[a - 1] + orbit.jumps[s - 1]
        seg_t = og.times[a:b]
        res = integrate_segment(spec, u, seg_t[0], seg_t[-1], tol, times=seg_t, method=method)
        values[a:b] = res.states
        stats.append({"segment": s, "nfev": res.nfev, "energy_change": res.energy_change})
        u = values[b - 1]
    return PiecewisePath(og, values, np.array(orbit.jumps), orbit.orbit_index, stats)


def energy_drift(path: PiecewisePath, spec) -> np.ndarray:
    """Per-segment ``max_t |H(u(t)) - H(u(segment start))|`` over the nodes."""
    if not getattr(spec, "autonomous", True):
        raise ConfigurationError("energy drift needs an autonomous Hamiltonian")
    out = np.empty(path.grid.n_segments)
    for s, (a, b) in enumerate(path.grid.segments):
        h = np.asarray(spec.value(0.0, path.values[a:b]), dtype=float)
        out[s] = float(np.max(np.abs(h - h[0])))
    return out


def first_return_time(spec, u0, tol: float = 1e-12, t_max: float = 1e6) -> float:
    """Period of a closed orbit through ``u0``.

    Uses ``g(u) = (u, J u0)``, which vanishes at ``u0``: the half turn is the
    first downward zero of ``g`` and the return the next upward zero.
    """
    u0 = np.asarray(u0, dtype=float)
    ju0 = apply_j(u0)
    if not np.any(ju0):
        raise ConfigurationError("u0 must be nonzero")
    rhs = _field(spec)

    def crossing(direction):
        def g(t, u):
            return float(u @ ju0)

        g.terminal = True
        g.direction = direction
        return g

    t, u = 0.0, u0
    for direction in (-1.0, 1.0):
        sol = solve_ivp(rhs, (t, t_max), u, method="RK45", events=crossing(direction),
                        rtol=tol, atol=tol * 1e-2)
        if sol.status != 1:
            raise IntegrationError("no return before t_max", last_good_time=float(sol.t[-1]))
        t, u = float(sol.t_events[0][0]), sol.y_events[0][0]
    return t


def path_rows(paths):
    """Rows ``(orbit_id, t, side, u_1, ..., u_2n)``."""
    for p in paths:
        for t, s, u in zip(p.grid.times, p.grid.side, p.values):
            yield (p.orbit_index, t, SIDE_NAMES[int(s)], *u)


def write_paths_csv(path, paths):
    paths = list(paths)
    d = paths[0].values.shape[1] if paths else 2
    header = ("orbit_id", "t", "side", *[f"u{i + 1}" for i in range(d)])
    return write_csv(path, header, path_rows(paths))
