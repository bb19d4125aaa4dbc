"""Discretised stochastic processes on an impulse-aware time grid.

Each sample orbit gets an :class:`OrbitGrid`: the shared uniform base grid
on ``[0, T]`` split into segments at the orbit's impulse times.  An impulse
time appears twice, once as the last node of the segment on its left (the
value ``x(xi^-)``) and once as the first node of the segment on its right
(``x(xi^+)``).  Derivatives and quadrature never cross a segment boundary.

An :class:`EnsembleProcess` is a tuple of grids with one value array of
shape ``(n_nodes, 2n)`` per orbit; expectations are ensemble means.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline

from .errors import ConfigurationError, DomainError
from .impulse_process import SampleOrbit

__all__ = [
    "GridSpec",
    "OrbitGrid",
    "coarsen_orbit",
    "EnsembleProcess",
    "pc_norm",
    "pc1_norm",
    "derivative",
    "inner_product",
    "integrate",
    "expectation_cs_check",
    "second_moment_profile",
    "KEstimate",
    "estimate_K",
    "trial_function",
]

INTERIOR, LEFT, RIGHT = 0, 1, 2
SIDE_NAMES = {INTERIOR: "interior", LEFT: "left", RIGHT: "right"}


@dataclass(frozen=True)
class GridSpec:
    """Base grid of ``nodes = M + 1`` points.

    ``min_gap`` (a fraction of the base spacing) drops base nodes that fall
    too close to an impulse time; segments left with no interior node get
    their midpoint, so every segment carries at least three nodes.
    """

    nodes: int = 65
    quadrature: str = "trapezoid"
    derivative: str = "central2"
    min_gap: float = 0.1
    merge_gap: float = 0.1

    def __post_init__(self):
        if self.nodes < 9:
            raise ConfigurationError("a grid needs at least 9 base nodes")
        if self.quadrature not in ("trapezoid", "simpson"):
            raise ConfigurationError(f"unknown quadrature {self.quadrature!r}")
        if self.derivative != "central2":
            raise ConfigurationError(f"unknown derivative scheme {self.derivative!r}")
        if not 0.0 <= self.min_gap < 0.5:
            raise ConfigurationError("min_gap must lie in [0, 0.5)")
        if self.merge_gap < 0:
            raise ConfigurationError("merge_gap must be >= 0")

    def spacing(self, horizon: float) -> float:
        return horizon / (self.nodes - 1)

    def to_dict(self):
        return {
            "nodes": self.nodes,
            "quadrature": self.quadrature,
            "derivative": self.derivative,
            "min_gap": self.min_gap,
            "merge_gap": self.merge_gap,
        }


def coarsen_orbit(orbit: SampleOrbit, spec: Optional[GridSpec] = None) -> SampleOrbit:
    """Merge impulses closer than ``merge_gap`` base spacings into clusters.

    Each cluster keeps the time of its first impulse and the sum of its
    jumps; an impulse within the gap of ``T`` joins the previous cluster.
    The total jump (and, for jumps sharing a direction, the jump mass) is
    unchanged; only times move, by less than the gap.
    """
    spec = spec or GridSpec()
    delta = spec.merge_gap * spec.spacing(orbit.horizon)
    if orbit.size == 0 or delta == 0.0:
        return orbit
    times, taus, jumps = [], [], []
    for xi, tau, dj in zip(orbit.times, orbit.taus, orbit.jumps):
        near_end = orbit.horizon - xi < delta
        if times and (xi - times[-1] < delta or near_end):
            jumps[-1] = jumps[-1] + dj
        else:
            times.append(xi)
            taus.append(tau)
            jumps.append(np.array(dj, dtype=float))
    return replace(orbit, times=np.array(times), taus=np.array(taus), jumps=np.array(jumps))


def _lagrange_slope(x, x0):
    """Weights ``w`` with ``sum_k w_k f(x_k) = p'(x0)`` for the interpolant ``p`` of ``f``."""
    x = np.asarray(x, dtype=float)
    w = np.zeros(len(x))
    for k in range(len(x)):
        others = np.delete(x, k)
        for m in range(len(others)):
            rest = np.delete(others, m)
            w[k] += np.prod((x0 - rest) / (x[k] - rest)) / (x[k] - others[m])
    return w


def _segment_diff(t):
    """Derivative stencils on a nonuniform segment.

    Three-point central differences inside; at the two ends a one-sided
    four-point stencil (three points when the segment is that short), so
    the end error is no larger than the interior one.
    """
    n = len(t)
    width = 4 if n >= 4 else 3
    rows, cols, vals = [], [], []
    for i, idx in ((0, np.arange(width)), (n - 1, np.arange(n - width, n))):
        rows += [i] * width
        cols += idx.tolist()
        vals += _lagrange_slope(t[idx], t[i]).tolist()
    h = np.diff(t)
    for i in range(1, n - 1):
        hl, hr = h[i - 1], h[i]
        rows += [i, i, i]
        cols += [i - 1, i, i + 1]
        vals += [-hr / (hl * (hl + hr)), (hr - hl) / (hl * hr), hl / (hr * (hl + hr))]
    return rows, cols, vals


class OrbitGrid:
    """Time nodes of one orbit, split into segments at the impulse times."""

    def __init__(self, horizon: float, impulse_times=(), spec: Optional[GridSpec] = None):
        spec = spec or GridSpec()
        self.spec = spec
        self.horizon = float(horizon)
        xi = np.asarray(impulse_times, dtype=float)
        if xi.size and (np.any(np.diff(xi) <= 0) or xi[0] <= 0 or xi[-1] >= horizon):
            raise DomainError("impulse times must be strictly increasing inside (0, T)")
        self.impulse_times = xi
        self.boundaries = np.concatenate(([0.0], xi, [self.horizon]))
        base = np.linspace(0.0, self.horizon, spec.nodes)
        gap = spec.min_gap * self.horizon / (spec.nodes - 1)

        times, segment, side, bounds = [], [], [], []
        n_seg = len(self.boundaries) - 1
        for s in range(n_seg):
            a, b = self.boundaries[s], self.boundaries[s + 1]
            inner = base[(base > a + gap) & (base < b - gap)]
            if inner.size == 0:
                mid = 0.5 * (a + b)
                if not a < mid < b:
                    raise DomainError("impulse times too close to resolve; coarsen the orbit")
                inner = np.array([mid])
            seg = np.concatenate(([a], inner, [b]))
            start = len(times)
            times.extend(seg)
            segment.extend([s] * len(seg))
            sides = [INTERIOR] * len(seg)
            if s > 0:
                sides[0] = RIGHT
            if s < n_seg - 1:
                sides[-1] = LEFT
            side.extend(sides)
            bounds.append((start, len(times)))

        self.times = np.array(times)
        self.segment = np.array(segment, dtype=int)
        self.side = np.array(side, dtype=int)
        self.segments = tuple(bounds)
        self.left_nodes = np.array([stop - 1 for _, stop in bounds[:-1]], dtype=int)
        self.right_nodes = np.array([start for start, _ in bounds[1:]], dtype=int)
        self.boundary_nodes = np.array([0, len(times) - 1], dtype=int)
        for a, b in bounds:
            self.times[a:b].setflags(write=False)

        rows, cols, vals = [], [], []
        w = np.zeros(len(times))
        for a, b in bounds:
            r, c, v = _segment_diff(self.times[a:b])
            rows += [a + x for x in r]
            cols += [a + x for x in c]
            vals += v
            h = np.diff(self.times[a:b])
            w[a:b - 1] += 0.5 * h
            w[a + 1:b] += 0.5 * h
        self.diff = sp.csr_matrix((vals, (rows, cols)), shape=(len(times), len(times)))
        self.weights = w

        # cells between consecutive nodes of a segment (never across an impulse)
        left = np.concatenate([np.arange(a, b - 1) for a, b in bounds])
        h = self.times[left + 1] - self.times[left]
        m = len(left)
        r = np.repeat(np.arange(m), 2)
        c = np.stack((left, left + 1), axis=1).ravel()
        self.cell_lengths = h
        self.cell_times = 0.5 * (self.times[left] + self.times[left + 1])
        self.cell_left = left
        self.cell_diff = sp.csr_matrix((np.stack((-1 / h, 1 / h), axis=1).ravel(), (r, c)),
                                       shape=(m, len(times)))
        self.cell_mean = sp.csr_matrix((np.full(2 * m, 0.5), (r, c)), shape=(m, len(times)))
        self.weights.setflags(write=False)
        self._simpson = None

    @property
    def n_nodes(self) -> int:
        return len(self.times)

    @property
    def n_segments(self) -> int:
        return len(self.segments)

    def quadrature_weights(self, rule: Optional[str] = None) -> np.ndarray:
        rule = rule or self.spec.quadrature
        if rule == "trapezoid":
            return self.weights
        if self._simpson is None:
            w = np.zeros(self.n_nodes)
            for a, b in self.segments:
                t = self.times[a:b]
                w[a:b] = simpson(np.eye(b - a), x=t, axis=1)
            self._simpson = w
        return self._simpson

    def same_as(self, other: "OrbitGrid") -> bool:
        return other is self or (
            self.n_nodes == other.n_nodes and np.array_equal(self.times, other.times)
            and np.array_equal(self.segment, other.segment)
        )

    def sample(self, fn: Callable) -> np.ndarray:
        """Values of a function of time on the nodes: ``fn(t) -> (m, d)``."""
        return np.asarray(fn(self.times), dtype=float)

    def segment_of(self, t, side: str) -> np.ndarray:
        """Segment holding the left (``"left"``) or right limit at each ``t``."""
        t = np.asarray(t, dtype=float)
        how = "left" if side == "left" else "right"
        s = np.searchsorted(self.boundaries, t, side=how) - 1
        return np.clip(s, 0, self.n_segments - 1)

    def evaluate(self, values: np.ndarray, t, side: str = "left") -> np.ndarray:
        """Piecewise-linear left or right limits at arbitrary times."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t < 0) or np.any(t > self.horizon):
            raise DomainError("evaluation times must lie in [0, T]")
        values = np.asarray(values, dtype=float)
        out = np.empty((len(t), values.shape[1]))
        seg = self.segment_of(t, side)
        for s in np.unique(seg):
            a, b = self.segments[s]
            mask = seg == s
            for c in range(values.shape[1]):
                out[mask, c] = np.interp(t[mask], self.times[a:b], values[a:b, c])
        return out

    def to_dict(self):
        return {
            "horizon": self.horizon,
            "impulse_times": self.impulse_times.tolist(),
            "grid": self.spec.to_dict(),
        }


@dataclass(frozen=True)
class EnsembleProcess:
    """Per-orbit node values on per-orbit grids over a common horizon."""

    grids: tuple
    values: tuple
    dirichlet: bool = False

    def __post_init__(self):
        grids = tuple(self.grids)
        values = tuple(np.asarray(v, dtype=float) for v in self.values)
        if not grids:
            raise DomainError("an ensemble needs at least one orbit")
        if len(grids) != len(values):
            raise DomainError("one value array per grid is required")
        dims = {v.shape[1] if v.ndim == 2 else -1 for v in values}
        if len(dims) != 1 or -1 in dims:
            raise DomainError("values must be 2-D arrays sharing the state dimension")
        horizons = {g.horizon for g in grids}
        if len(horizons) != 1:
            raise DomainError("all orbits must share the horizon")
        for g, v in zip(grids, values):
            if v.shape[0] != g.n_nodes:
                raise DomainError("value rows must match grid nodes")
        if self.dirichlet:
            for g, v in zip(grids, values):
                v[g.boundary_nodes] = 0.0
        object.__setattr__(self, "grids", grids)
        object.__setattr__(self, "values", values)

    @property
    def n_orbits(self) -> int:
        return len(self.grids)

    @property
    def dimension(self) -> int:
        return self.values[0].shape[1]

    @property
    def horizon(self) -> float:
        return self.grids[0].horizon

    @classmethod
    def from_function(cls, grids, fn, dirichlet=False):
        """Sample ``fn(t) -> (m, d)`` on every grid (a deterministic process)."""
        grids = tuple(grids)
        return cls(grids, tuple(g.sample(fn) for g in grids), dirichlet)

    @classmethod
    def zeros(cls, grids, dimension, dirichlet=True):
        grids = tuple(grids)
        return cls(grids, tuple(np.zeros((g.n_nodes, dimension)) for g in grids), dirichlet)

    def with_values(self, values, dirichlet=None):
        return EnsembleProcess(self.grids, tuple(values),
                               self.dirichlet if dirichlet is None else dirichlet)

    def map(self, fn):
        """Apply ``fn(grid, values) -> values`` orbit by orbit."""
        return EnsembleProcess(self.grids, tuple(fn(g, v) for g, v in zip(self.grids, self.values)))

    def _check_compatible(self, other):
        if self.n_orbits != other.n_orbits or any(
            not a.same_as(b) for a, b in zip(self.grids, other.grids)
        ):
            raise DomainError("ensembles live on different grids")

    def __add__(self, other):
        self._check_compatible(other)
        return self.with_values([a + b for a, b in zip(self.values, other.values)],
                                self.dirichlet and other.dirichlet)

    def __sub__(self, other):
        self._check_compatible(other)
        return self.with_values([a - b for a, b in zip(self.values, other.values)],
                                self.dirichlet and other.dirichlet)

    def __mul__(self, c):
        return self.with_values([c * v for v in self.values])

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def orbit(self, i: int) -> "EnsembleProcess":
        return EnsembleProcess((self.grids[i],), (self.values[i],), self.dirichlet)

    def to_dict(self):
        return {
            "horizon": self.horizon,
            "dimension": self.dimension,
            "dirichlet": self.dirichlet,
            "orbits": [
                {**g.to_dict(), "times": g.times.tolist(), "values": v.tolist()}
                for g, v in zip(self.grids, self.values)
            ],
        }

    @classmethod
    def from_dict(cls, d):
        grids, values = [], []
        for o in d["orbits"]:
            g = OrbitGrid(o["horizon"], o["impulse_times"], GridSpec(**o["grid"]))
            if not np.array_equal(g.times, np.asarray(o["times"], dtype=float)):
                raise ConfigurationError("stored node times do not match the rebuilt grid")
            grids.append(g)
            values.append(np.asarray(o["values"], dtype=float).reshape(g.n_nodes, d["dimension"]))
        return cls(tuple(grids), tuple(values), bool(d["dirichlet"]))


def _shared_grid(x: EnsembleProcess) -> bool:
    g0 = x.grids[0]
    return all(g.same_as(g0) for g in x.grids[1:])


def _profiles(x: EnsembleProcess, fns):
    """Ensemble means of pointwise functionals ``f(x_1, ..., x_m)`` of the orbit values.

    Means are evaluated on the union of all node times, at both one-sided
    limits.  ``fns`` maps per-orbit ``(values,)`` at those times to scalars.
    """
    if _shared_grid(x):
        stack = np.stack(x.values)  # (N, n, d)
        return [fn(stack).mean(axis=0) for fn in fns]
    times = np.unique(np.concatenate([g.times for g in x.grids]))
    acc = [np.zeros(2 * len(times)) for _ in fns]
    for g, v in zip(x.grids, x.values):
        both = np.concatenate((g.evaluate(v, times, "left"), g.evaluate(v, times, "right")))
        for a, fn in zip(acc, fns):
            a += fn(both[None])[0]
    return [a / x.n_orbits for a in acc]


def second_moment_profile(x: EnsembleProcess) -> np.ndarray:
    """``E|x(t)|^2`` over all nodes (both one-sided limits at impulses)."""
    return _profiles(x, [lambda s: np.einsum("...ij,...ij->...i", s, s)])[0]


def pc_norm(x: EnsembleProcess) -> float:
    """``(max_t E|x(t)|^2)^(1/2)``, the max taken over grid nodes."""
    return math.sqrt(float(np.max(second_moment_profile(x))))


def derivative(x: EnsembleProcess) -> EnsembleProcess:
    """Segmentwise second-order finite differences, one-sided at segment ends."""
    return EnsembleProcess(x.grids, tuple(g.diff @ v for g, v in zip(x.grids, x.values)))


def pc1_norm(x: EnsembleProcess) -> float:
    return max(pc_norm(x), pc_norm(derivative(x)))


def integrate(x: EnsembleProcess, rule: Optional[str] = None) -> np.ndarray:
    """Ensemble mean of the time integral of each component."""
    parts = [g.quadrature_weights(rule) @ v for g, v in zip(x.grids, x.values)]
    return np.array([math.fsum(p[c] for p in parts) for c in range(x.dimension)]) / x.n_orbits


def inner_product(x: EnsembleProcess, y: EnsembleProcess, rule: Optional[str] = None) -> float:
    """``E int_0^T (x(t), y(t)) dt`` by segmentwise quadrature."""
    x._check_compatible(y)
    if x.dimension != y.dimension:
        raise DomainError("state dimensions differ")
    parts = [
        float(g.quadrature_weights(rule) @ np.einsum("ij,ij->i", a, b))
        for g, a, b in zip(x.grids, x.values, y.values)
    ]
    return math.fsum(parts) / x.n_orbits


def expectation_cs_check(x: EnsembleProcess, y: EnsembleProcess) -> float:
    """Minimum over nodes of ``E|x|^2 E|y|^2 - (E|x||y|)^2``."""
    x._check_compatible(y)
    joined = EnsembleProcess(x.grids, tuple(np.hstack((a, b)) for a, b in zip(x.values, y.values)))
    d = x.dimension

    def nx(s):
        return np.linalg.norm(s[..., :d], axis=-1)

    def ny(s):
        return np.linalg.norm(s[..., d:], axis=-1)

    exx, eyy, exy = _profiles(joined, [lambda s: nx(s) ** 2, lambda s: ny(s) ** 2,
                                       lambda s: nx(s) * ny(s)])
    return float(np.min(exx * eyy - exy**2))


def trial_function(family: str, rng, horizon: float, dimension: int, modes: int = 8,
                   knots: int = 6):
    """A random smooth function of time vanishing at 0 and ``horizon``.

    ``sine``: ``sum_k a_k sin(k pi t / T)`` with ``a_k ~ N(0, 1) / k`` per
    component.  ``cubic``: a cubic spline through random knot values pinned
    to zero at both ends.
    """
    if family == "sine":
        a = rng.standard_normal((modes, dimension)) / np.arange(1, modes + 1)[:, None]
        k = np.arange(1, modes + 1)

        def fn(t):
            t = np.asarray(t, dtype=float)
            return np.sin(np.pi * np.outer(t, k) / horizon) @ a

        return fn
    if family == "cubic":
        tk = np.linspace(0.0, horizon, knots + 1)
        vals = rng.standard_normal((knots + 1, dimension))
        vals[0] = vals[-1] = 0.0
        spline = CubicSpline(tk, vals, axis=0)

        def fn(t):
            out = spline(np.asarray(t, dtype=float))
            return np.where(np.isclose(t, 0.0)[:, None] | np.isclose(t, horizon)[:, None], 0.0, out)

        return fn
    raise ConfigurationError(f"unknown trial family {family!r}")


@dataclass(frozen=True)
class KEstimate:
    """Empirical lower bound for the embedding constant and the value used downstream."""

    lower_bound: float
    working: float
    best_trial: int
    family: str
    trials: int

    def to_dict(self):
        return {
            "lower_bound": self.lower_bound,
            "working": self.working,
            "best_trial": self.best_trial,
            "family": self.family,
            "trials": self.trials,
            "certified_upper_bound": None,
        }


def estimate_K(grid: GridSpec, horizon: float, trial_family: str = "sine", samples: int = 100,
               seed: int = 0, dimension: int = 2, margin: float = 1.05) -> KEstimate:
    """Largest ``||x||_PC1 / ||x'||_PC`` over random Dirichlet trial functions.

    Trial ``i`` depends only on ``(seed, i)``, so the estimate is
    nondecreasing in ``samples``.
    """
    if samples < 1:
        raise ConfigurationError("samples must be >= 1")
    og = OrbitGrid(horizon, (), grid)
    best, arg = -math.inf, -1
    for i in range(samples):
        rng = np.random.default_rng([int(seed) % 2**63, i])
        x = EnsembleProcess.from_function((og,), trial_function(trial_family, rng, horizon,
                                                                dimension), dirichlet=True)
        dn = pc_norm(derivative(x))
        if dn == 0.0:
            continue
        ratio = pc1_norm(x) / dn
        if ratio > best:
            best, arg = ratio, i
    if arg < 0:
        raise DomainError("every trial had a vanishing derivative")
    return KEstimate(best, margin * best, arg, trial_family, samples)
