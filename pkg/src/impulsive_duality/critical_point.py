"""Hypothesis checks, mountain-pass geometry and the critical-point search.

The dual action is an ensemble mean of per-orbit functionals, so the search
runs orbit by orbit and the per-orbit critical points are collected into one
ensemble process.

Search (per orbit), in the tied Dirichlet subspace of
:class:`~impulsive_duality.dual_action.OrbitFunctional`:

1. A discrete path of ``P`` nodes joins ``0`` to the descent loop ``v1``,
   with one node placed on the highest point of the initial segment.  Each
   iteration moves the highest interior node (lowest index on ties) one
   Armijo step along the negative ``H^1`` gradient with its component along
   the path removed, so the node slides down the ridge instead of off it.
   Every few iterations both sides of the highest node are respaced by arc
   length; the respacing is kept only if the path maximum does not rise.
2. When the path maximum stalls, the highest node is refined by damped
   Newton steps on the gradient with backtracking on the gradient norm.
   Newton converges to the saddle; plain descent on the functional would
   roll off it.

``method="descent"`` skips the path and applies step 2 from an initial
guess.  This is the right tool when the functional has no mountain-pass
geometry (for example a convex quadratic problem).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dual_action import OrbitFunctional, build_functionals, chi
from .errors import ConfigurationError
from .function_space import (
    EnsembleProcess,
    derivative,
    estimate_K,
    pc1_norm,
    pc_norm,
    trial_function,
)
from .hamiltonian import (
    _rel,
    _sample_vectors,
    alpha_star,
    apply_j,
    conjugate_exponent,
)
from .impulse_process import _pmap, analytic_B_bound, estimate_B
from .scenario import Scenario, load_scenario

__all__ = [
    "HypothesisReport",
    "verify_hypotheses",
    "rim_radius",
    "descent_loop",
    "GeometryReport",
    "mountain_pass_geometry",
    "CoercivityReport",
    "coercivity_check",
    "OrbitSearch",
    "MountainPassResult",
    "find_critical_point",
    "RecoveredU",
    "recover_u",
]


def _certificate(spec):
    cert = getattr(spec, "certificate", None)
    if cert is None:
        raise ConfigurationError("hypotheses need a power-law Hamiltonian or an (alpha, q) certificate")
    return tuple(map(float, cert))


@dataclass(frozen=True)
class HypothesisReport:
    """Jump summability, superquadraticity, then growth with the size condition.

    The ``H1``, ``H2`` and ``H3`` field prefixes follow that order.

    The slacks are minimum relative slacks over random states; pass flags
    allow ``slack_tol`` of rounding.  ``condition_value`` is
    ``(1 - p/2) alpha* - B/2`` with the analytic bound for ``B`` when one
    exists, otherwise the Monte Carlo estimate.
    """

    B_estimate: float
    B_stderr: float
    B_bound: Optional[float]
    B_used: str
    H2_min_slack: float
    H3_min_slack: float
    alpha: float
    q: float
    p: float
    alpha_star: float
    condition_value: float
    condition_value_mc: float
    H1_pass: bool
    H2_pass: bool
    H3_pass: bool
    condition_pass: bool
    n_orbits: int
    samples: int

    @property
    def passed(self) -> bool:
        return self.H1_pass and self.H2_pass and self.H3_pass and self.condition_pass

    def to_dict(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["passed"] = self.passed
        return d


def verify_hypotheses(scenario, samples: Optional[int] = None, seed: Optional[int] = None,
                      n_orbits: Optional[int] = None, slack_tol: float = 1e-10) -> HypothesisReport:
    """Check the existence hypotheses for a scenario.

    ``B`` is estimated by Monte Carlo over ``n_orbits`` orbits (default the
    scenario's ensemble size) and bounded analytically when the jump family
    has a closed form.
    """
    sc = load_scenario(scenario)
    spec = sc.hamiltonian
    alpha, q = _certificate(spec)
    p = conjugate_exponent(q)
    a_star = alpha_star(alpha, q)
    seed = sc.ensemble.seed if seed is None else seed
    samples = sc.tolerances.hypothesis_samples if samples is None else samples
    n_orbits = sc.ensemble.n_orbits if n_orbits is None else n_orbits

    imp = sc.impulse_spec
    if imp is not None:
        est = estimate_B(imp, n_orbits, seed, sc.ensemble.workers)
        b_mc, b_err = est.mc_mean, est.mc_stderr
        try:
            b_bound = analytic_B_bound(imp, loose=True)
        except Exception:
            b_bound = None
    else:
        orbits = sc.sampled_orbits(1)
        b_mc, b_err = orbits[0].jump_mass, 0.0
        b_bound = b_mc

    rng = np.random.default_rng([int(seed) % 2**63, 2])
    u = _sample_vectors(rng, samples, sc.dimension, 1e-2, 10.0)
    h = np.asarray(spec.value(0.0, u), dtype=float)
    gu = np.einsum("ij,ij->i", spec.grad(0.0, u), u)
    h2 = float(np.min(_rel(gu, q * h)))
    h3 = float(np.min(_rel(alpha * np.linalg.norm(u, axis=1) ** q, h)))

    lead = (1.0 - p / 2.0) * a_star
    b_use = b_bound if b_bound is not None else b_mc
    cond = lead - b_use / 2.0
    return HypothesisReport(
        B_estimate=b_mc,
        B_stderr=b_err,
        B_bound=b_bound,
        B_used="analytic" if b_bound is not None else "monte_carlo",
        H2_min_slack=h2,
        H3_min_slack=h3,
        alpha=alpha,
        q=q,
        p=p,
        alpha_star=a_star,
        condition_value=cond,
        condition_value_mc=lead - b_mc / 2.0,
        H1_pass=bool(math.isfinite(b_use)),
        H2_pass=h2 >= -slack_tol and q > 2,
        H3_pass=h3 >= -slack_tol,
        condition_pass=cond > 0,
        n_orbits=n_orbits,
        samples=samples,
    )


def rim_radius(K: float, p: float, horizon: float) -> float:
    """``rho = (K^p / T)^(1 / (p - 1))``."""
    return (K**p / horizon) ** (1.0 / (p - 1.0))


def descent_loop(grids, horizon: float, e) -> EnsembleProcess:
    """``v1(t) = (cos(2 pi t/T) - 1) e + sin(2 pi t/T) J e`` on every grid.

    Shifting the circular loop by ``-e`` makes it vanish at both ends
    without changing ``int (J v1', v1) dt = -2 pi |e|^2``.
    """
    e = np.asarray(e, dtype=float)
    je = apply_j(e)

    def loop(t):
        th = 2.0 * np.pi * np.asarray(t, dtype=float) / horizon
        return np.outer(np.cos(th) - 1.0, e) + np.outer(np.sin(th), je)

    return EnsembleProcess.from_function(grids, loop, dirichlet=True)


@dataclass(frozen=True)
class GeometryReport:
    """Mountain-pass geometry: ``chi(0) = 0``, a positive rim and a negative far point."""

    rho: float
    K_working: float
    K_lower_bound: Optional[float]
    p: float
    chi_at_zero: float
    rim_lower_bound: float
    rim_samples: int
    rim_formula: Optional[float]
    chi_at_v1: float
    e_norm_used: float
    chi_at_2v1: float
    e_direction: tuple
    rim_values: tuple = field(repr=False, default=())

    @property
    def rim_positive(self) -> bool:
        return self.rim_lower_bound > 0

    @property
    def far_negative(self) -> bool:
        return self.chi_at_v1 < 0

    @property
    def passed(self) -> bool:
        return abs(self.chi_at_zero) == 0.0 and self.rim_positive and self.far_negative

    def to_dict(self):
        return {
            "rho": self.rho,
            "K_working": self.K_working,
            "K_lower_bound": self.K_lower_bound,
            "p": self.p,
            "chi_at_zero": self.chi_at_zero,
            "rim_lower_bound": self.rim_lower_bound,
            "rim_samples": self.rim_samples,
            "rim_formula": self.rim_formula,
            "chi_at_v1": self.chi_at_v1,
            "e_norm_used": self.e_norm_used,
            "chi_at_2v1": self.chi_at_2v1,
            "e_direction": list(self.e_direction),
            "rim_positive": self.rim_positive,
            "far_negative": self.far_negative,
            "passed": self.passed,
        }


def _direction(sc: Scenario, e_direction):
    e = e_direction if e_direction is not None else sc.optimizer.e_direction
    if e is None:
        e = np.zeros(sc.dimension)
        e[0] = 1.0
    e = np.asarray(e, dtype=float)
    if e.shape != (sc.dimension,) or not np.linalg.norm(e) > 0:
        raise ConfigurationError("e_direction must be a nonzero vector of length 2n")
    return e / np.linalg.norm(e)


def _chi_value(v, spec, orbits) -> float:
    return chi(v, spec, orbits, with_gradient=False).chi_value


def working_K(sc: Scenario):
    """``(K_working, K_lower_bound)`` from the config or by estimation on the scenario grid."""
    opt = sc.optimizer
    if opt.k_working is not None:
        return float(opt.k_working), None
    k = estimate_K(sc.grid, sc.horizon, opt.k_family, opt.k_samples, sc.ensemble.seed,
                   sc.dimension, opt.k_margin)
    return k.working, k.lower_bound


def mountain_pass_geometry(scenario, K_working: Optional[float] = None, e_direction=None,
                           e_norm: Optional[float] = None, rim_samples: Optional[int] = None,
                           hypotheses: Optional[HypothesisReport] = None) -> GeometryReport:
    """Check the geometry on the scenario's solve ensemble.

    The rim ``||v||_PC1 = rho`` is sampled with random sine-series
    directions.  ``v1`` starts at ``|e| = max(1, rho)`` (or ``e_norm``) and
    ``|e|`` doubles until ``chi(v1) < 0`` or the configured cap is passed.
    """
    sc = load_scenario(scenario)
    spec = sc.hamiltonian
    opt = sc.optimizer
    _, q = _certificate(spec)
    p = conjugate_exponent(q)
    k_low = None
    if K_working is None:
        K_working, k_low = working_K(sc)
    rho = rim_radius(K_working, p, sc.horizon)
    orbits = sc.solve_orbits()
    grids = sc.grids(orbits)
    zero = EnsembleProcess.zeros(grids, sc.dimension)
    chi0 = _chi_value(zero, spec, orbits)

    n_rim = opt.rim_samples if rim_samples is None else rim_samples
    rim = []
    for i in range(n_rim):
        rng = np.random.default_rng([int(sc.ensemble.seed) % 2**63, 3, i])
        x = EnsembleProcess.from_function(grids, trial_function("sine", rng, sc.horizon,
                                                                sc.dimension), dirichlet=True)
        x = (rho / pc1_norm(x)) * x
        rim.append(_chi_value(x, spec, orbits))

    rim_formula = None
    if hypotheses is not None:
        rim_formula = rho * hypotheses.condition_value

    e = _direction(sc, e_direction)
    norm = e_norm if e_norm is not None else opt.e_norm
    norm = max(1.0, rho) if norm is None else float(norm)
    while True:
        c1 = _chi_value(descent_loop(grids, sc.horizon, norm * e), spec, orbits)
        if c1 < 0 or 2 * norm > opt.e_norm_cap:
            break
        norm *= 2.0
    c2 = _chi_value(descent_loop(grids, sc.horizon, 2 * norm * e), spec, orbits)
    return GeometryReport(rho, float(K_working), k_low, p, chi0, float(min(rim)), n_rim,
                          rim_formula, c1, norm, c2, tuple(e.tolist()), tuple(rim))


@dataclass(frozen=True)
class CoercivityReport:
    """Slack of ``chi(v) >= a (T / K^p) ||v||^p - B ||v|| / 2`` on sampled spheres.

    ``a = (1 - p/2) alpha*`` and ``||.||`` is the ``PC1`` norm.  One minimum
    slack per radius; negative values are reported, not raised.
    """

    radii: tuple
    min_slack: tuple
    samples: int
    K_working: float
    B_used: float
    lead: float

    @property
    def passed(self) -> bool:
        return all(s >= 0 for s in self.min_slack)

    def to_dict(self):
        return {"radii": list(self.radii), "min_slack": list(self.min_slack),
                "samples": self.samples, "K_working": self.K_working, "B_used": self.B_used,
                "lead": self.lead, "passed": self.passed}


def coercivity_lower_bound(norm: float, lead: float, K: float, p: float, horizon: float,
                           B: float) -> float:
    return lead * (horizon / K**p) * norm**p - 0.5 * B * norm


def coercivity_check(scenario, radii=(0.5, 1.0, 2.0, 4.0, 8.0, 16.0), samples: int = 50,
                     K_working: Optional[float] = None,
                     hypotheses: Optional[HypothesisReport] = None) -> CoercivityReport:
    """Sample random sine-series ``v`` of each ``PC1`` norm and compare ``chi`` with the bound."""
    sc = load_scenario(scenario)
    hyp = hypotheses or verify_hypotheses(sc)
    if K_working is None:
        K_working, _ = working_K(sc)
    B = hyp.B_bound if hyp.B_bound is not None else hyp.B_estimate
    lead = (1.0 - hyp.p / 2.0) * hyp.alpha_star
    orbits = sc.solve_orbits()
    grids = sc.grids(orbits)
    out = []
    for R in radii:
        worst = math.inf
        for i in range(samples):
            rng = np.random.default_rng([int(sc.ensemble.seed) % 2**63, 7, i])
            x = EnsembleProcess.from_function(grids, trial_function("sine", rng, sc.horizon,
                                                                    sc.dimension), dirichlet=True)
            x = (R / pc1_norm(x)) * x
            bound = coercivity_lower_bound(R, lead, K_working, hyp.p, sc.horizon, B)
            worst = min(worst, _chi_value(x, sc.hamiltonian, orbits) - bound)
        out.append(worst)
    return CoercivityReport(tuple(float(r) for r in radii), tuple(out), samples,
                            float(K_working), float(B), lead)


@dataclass
class OrbitSearch:
    """Outcome of the search on one orbit."""

    x: np.ndarray
    value: float
    gradient_norm: float
    iterations: int
    converged: bool
    endpoint_value: float
    history: list


def _argmax(vals, tol):
    inner = vals[1:-1]
    top = max(inner)
    for k, c in enumerate(inner, start=1):
        if c >= top - tol:
            return k
    return 1 + int(np.argmax(inner))


def _arc_fill(f: OrbitFunctional, nodes, count):
    """``count + 1`` points spaced by H^1 arc length along a polyline (ends kept)."""
    seg = [math.sqrt(max(f.sobolev_dot(y - x, y - x), 0.0)) for x, y in zip(nodes[:-1], nodes[1:])]
    cum = np.concatenate(([0.0], np.cumsum(seg)))
    if count < 1 or cum[-1] == 0:
        return [nodes[0], nodes[-1]][: count + 1]
    out = []
    for s in np.linspace(0.0, cum[-1], count + 1):
        i = min(int(np.searchsorted(cum, s, side="right")) - 1, len(nodes) - 2)
        lam = 0.0 if seg[i] == 0 else min((s - cum[i]) / seg[i], 1.0)
        out.append((1 - lam) * nodes[i] + lam * nodes[i + 1])
    out[0], out[-1] = nodes[0], nodes[-1]
    return out


def _respace(f: OrbitFunctional, path, vals, k):
    """Respace both sides of the anchor node ``k`` by arc length.

    The anchor keeps its position; the respaced path is kept only if its
    maximum does not exceed the current one.
    """
    n = len(path)
    left = _arc_fill(f, path[: k + 1], k)
    right = _arc_fill(f, path[k:], n - 1 - k)
    new = left[:-1] + [path[k]] + right[1:]
    new_vals = [vals[0]] + [f.value(x) for x in new[1:-1]] + [vals[-1]]
    new_vals[k] = vals[k]
    if max(new_vals[1:-1]) <= max(vals[1:-1]):
        return new, new_vals
    return path, vals


def _initial_path(f: OrbitFunctional, x1, nodes, samples=256):
    """Nodes on the segment ``[0, x1]`` with one node on its highest sample."""
    s = np.linspace(0.0, 1.0, samples + 1)
    vals = [f.value(t * x1) for t in s]
    top = s[int(np.argmax(vals))]
    k = int(np.clip(round(top * (nodes - 1)), 1, nodes - 2))
    ts = np.concatenate((np.linspace(0.0, top, k + 1)[:-1], np.linspace(top, 1.0, nodes - k)))
    return [t * x1 for t in ts]


def _newton(f: OrbitFunctional, x, gtol, max_iter, history, start_iter):
    """Damped Newton on ``grad = 0`` with backtracking on the gradient norm."""
    gn = f.gradient_norm(x)
    it = start_iter
    for _ in range(max_iter):
        history.append((it, "refine", f.value(x), gn))
        if gn < gtol:
            return x, gn, it, True
        g = f.gradient(x).ravel()
        delta = np.linalg.lstsq(f.hessian(x), -g, rcond=1e-13)[0].reshape(x.shape)
        step = 1.0
        while step > 1e-12:
            xn = x + step * delta
            gnn = f.gradient_norm(xn)
            if gnn < (1.0 - 1e-4 * step) * gn:
                break
            step *= 0.5
        else:
            return x, gn, it, False
        x, gn = xn, gnn
        it += 1
    history.append((it, "refine", f.value(x), gn))
    return x, gn, it, gn < gtol


def _search_orbit(f: OrbitFunctional, x1, opt, method, x_init=None) -> OrbitSearch:
    history = []
    end_val = f.value(x1)
    if method == "descent":
        x0 = x1 if x_init is None else x_init
        x, gn, it, ok = _newton(f, x0, opt.gtol, opt.refine_max_iter, history, 0)
        return OrbitSearch(x, f.value(x), gn, it, ok, end_val, history)

    path = _initial_path(f, x1, opt.path_nodes)
    vals = [0.0] + [f.value(x) for x in path[1:-1]] + [end_val]
    tops = []
    it = 0
    for it in range(opt.max_iter):
        k = _argmax(vals, opt.tie_tol)
        g = f.gradient(path[k])
        gn = math.sqrt(float(np.sum(g * g / f.mass[:, None])))
        history.append((it, "path", vals[k], gn))
        tops.append(vals[k])
        if gn < opt.gtol:
            return OrbitSearch(path[k], vals[k], gn, it, True, end_val, history)
        # H^1 steepest descent, minus its component along the path
        s = -f.sobolev_solve(g)
        tau = path[k + 1] - path[k - 1]
        tt = f.sobolev_dot(tau, tau)
        if tt > 0:
            s = s - (f.sobolev_dot(s, tau) / tt) * tau
        slope = float(np.sum(g * s))
        if not slope < 0:
            break
        step = opt.armijo_step
        moved = False
        while step > 1e-14:
            xn = path[k] + step * s
            fn = f.value(xn)
            if fn <= vals[k] + opt.armijo_c * step * slope:
                path[k], vals[k] = xn, fn
                moved = True
                break
            step *= opt.armijo_shrink
        if not moved:
            break
        if (it + 1) % opt.redistribute_every == 0:
            path, vals = _respace(f, path, vals, _argmax(vals, opt.tie_tol))
        w = opt.stall_window
        if len(tops) > w and tops[-w - 1] - tops[-1] <= opt.stall_tol * max(1.0, abs(tops[-1])):
            break
    k = _argmax(vals, opt.tie_tol)
    x, gn, it2, ok = _newton(f, path[k], opt.gtol, opt.refine_max_iter, history, it + 1)
    return OrbitSearch(x, f.value(x), gn, it2, ok, end_val, history)


@dataclass
class MountainPassResult:
    """Ensemble of per-orbit critical points plus diagnostics."""

    v_star: EnsembleProcess
    chi_at_vstar: float
    gradient_norm: float
    iterations: int
    converged: bool
    method: str
    path_history: list
    geometry: dict
    orbit_results: list = field(repr=False, default_factory=list)

    @property
    def level_dominates(self) -> bool:
        return self.chi_at_vstar > max(0.0, self.geometry.get("chi_at_v1", -math.inf))

    def to_dict(self):
        return {
            "chi_at_vstar": self.chi_at_vstar,
            "gradient_norm": self.gradient_norm,
            "iterations": self.iterations,
            "converged": self.converged,
            "method": self.method,
            "geometry": self.geometry,
            "level_dominates": self.level_dominates,
            "orbits": [
                {"orbit": i, "chi": r.value, "gradient_norm": r.gradient_norm,
                 "iterations": r.iterations, "converged": r.converged,
                 "chi_at_v1": r.endpoint_value}
                for i, r in enumerate(self.orbit_results)
            ],
        }


def find_critical_point(scenario, options=None, v_init: Optional[EnsembleProcess] = None,
                        geometry: Optional[GeometryReport] = None,
                        force: bool = False) -> MountainPassResult:
    """Search for a critical point of the dual action on each solve orbit.

    Parameters
    ----------
    scenario : Scenario, str or dict
    options : OptimizerOptions, optional
        Overrides the scenario's optimizer block.
    v_init : EnsembleProcess, optional
        Starting point for ``descent``; also checked first in every mode, so
        a process that is already critical returns after 0 iterations.
    geometry : GeometryReport, optional
        Reused instead of recomputed.
    force : bool
        Run the mountain pass even if the geometry check fails.
    """
    sc = load_scenario(scenario)
    opt = options or sc.optimizer
    spec = sc.hamiltonian
    orbits = sc.solve_orbits()
    grids = sc.grids(orbits)
    fs = build_functionals(grids, spec, orbits, sc.dimension)

    method = opt.method
    geo = {}
    if method != "descent":
        if geometry is None:
            geometry = mountain_pass_geometry(sc)
        geo = geometry.to_dict()
        if method == "auto":
            method = "mountain_pass" if geometry.passed or force else "descent"
        e_norm, e = geometry.e_norm_used, np.asarray(geometry.e_direction)
    else:
        e = _direction(sc, None)
        e_norm = opt.e_norm if opt.e_norm is not None else 1.0
        geo = {"e_norm_used": e_norm, "e_direction": e.tolist()}
    loop = descent_loop(grids, sc.horizon, e_norm * e)

    def run(i):
        f = fs[i]
        x1 = f.from_nodes(loop.values[i])
        if method == "mountain_pass":
            n = e_norm
            while f.value(x1) >= 0 and 2 * n <= opt.e_norm_cap:
                n *= 2.0
                x1 = f.from_nodes(descent_loop((grids[i],), sc.horizon, n * e).values[0])
        if v_init is not None:
            x0 = f.from_nodes(v_init.values[i])
            gn = f.gradient_norm(x0)
            if gn < opt.gtol:
                return OrbitSearch(x0, f.value(x0), gn, 0, True, f.value(x1),
                                   [(0, "init", f.value(x0), gn)])
            if method == "descent":
                return _search_orbit(f, x1, opt, method, x0)
        return _search_orbit(f, x1, opt, method)

    results = _pmap(run, range(len(fs)), sc.ensemble.workers)
    v_star = EnsembleProcess(grids, tuple(f.to_nodes(r.x) for f, r in zip(fs, results)),
                             dirichlet=True)
    history = [(i, *h) for i, r in enumerate(results) for h in r.history]
    gn = math.sqrt(math.fsum(r.gradient_norm**2 for r in results) / len(results))
    return MountainPassResult(
        v_star=v_star,
        chi_at_vstar=_chi_value(v_star, spec, orbits),
        gradient_norm=gn,
        iterations=max(r.iterations for r in results),
        converged=all(r.converged for r in results),
        method=method,
        path_history=history,
        geometry=geo,
        orbit_results=results,
    )


@dataclass(frozen=True)
class RecoveredU:
    """The two state candidates ``J v`` and ``grad H*(v')`` and their PC distance.

    At a critical point they differ by a constant on each segment (the
    boundary condition pins ``v``, not ``u``); ``offset_distance`` removes
    the weighted mean difference segment by segment.
    """

    u_j: EnsembleProcess
    u_star: EnsembleProcess
    distance: float
    offset_distance: float
    segment_offsets: tuple

    def to_dict(self):
        return {
            "distance": self.distance,
            "offset_distance": self.offset_distance,
            "segment_offsets": [np.asarray(o).tolist() for o in self.segment_offsets],
        }


def recover_u(v: EnsembleProcess, spec) -> RecoveredU:
    u_j = EnsembleProcess(v.grids, tuple(apply_j(x) for x in v.values))
    dv = derivative(v)
    u_star = EnsembleProcess(v.grids, tuple(
        np.asarray(spec.conj_grad(g.times, d), dtype=float) for g, d in zip(v.grids, dv.values)
    ))
    diff = u_star - u_j
    offsets, centred = [], []
    for g, r in zip(diff.grids, diff.values):
        w = g.weights
        out = r.copy()
        per = []
        for a, b in g.segments:
            c = (w[a:b] @ r[a:b]) / w[a:b].sum()
            out[a:b] -= c
            per.append(c.tolist())
        offsets.append(per)
        centred.append(out)
    return RecoveredU(u_j, u_star, pc_norm(diff), pc_norm(diff.with_values(centred)),
                      tuple(offsets))
