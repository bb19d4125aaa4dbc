"""Random impulse times and jumps.

An orbit is generated from independent draws ``tau_j`` in ``(0, d_j)``:
the impulse times are the running sums ``xi_j = xi_{j-1} + tau_j`` with
``xi_0 = 0``, kept while they stay strictly inside ``(0, T)``.  The jump
applied at ``xi_j`` is ``b_j(tau_j)``, by default ``c_j * tau_j * e`` for a
fixed unit direction ``e``.

Every orbit draws from its own counter-based Philox stream keyed by
``(seed, orbit_index)``, so ensembles are reproducible and independent of
generation order or worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ._io import write_csv
from .errors import ConfigurationError, DomainError, UnsupportedSpecError

__all__ = [
    "IndexedSequence",
    "TabulatedJumpMap",
    "ImpulseSpec",
    "SampleOrbit",
    "BEstimate",
    "sample_orbit",
    "sample_orbits",
    "fixed_orbit",
    "counting_process",
    "estimate_B",
    "analytic_B_bound",
    "partial_jump_bound",
    "orbit_rows",
    "write_orbits_csv",
]

_KINDS = ("power", "index_power", "constant", "table")
_TAIL_TERMS = 256


@dataclass(frozen=True)
class IndexedSequence:
    """A sequence ``a_1, a_2, ...`` given in closed form or as a finite table.

    ``power``: ``scale * ratio**j``; ``index_power``: ``scale * j * ratio**j``;
    ``constant``: ``scale``; ``table``: ``values[j-1]`` (finite).
    """

    kind: str
    scale: float = 1.0
    ratio: float = 1.0
    values: tuple = ()

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigurationError(f"unknown sequence kind {self.kind!r}")
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if self.kind == "table" and not self.values:
            raise ConfigurationError("a table sequence needs at least one value")

    @classmethod
    def power(cls, scale, ratio):
        return cls("power", float(scale), float(ratio))

    @classmethod
    def index_power(cls, scale, ratio):
        return cls("index_power", float(scale), float(ratio))

    @classmethod
    def constant(cls, value):
        return cls("constant", float(value))

    @classmethod
    def table(cls, values):
        return cls("table", values=tuple(values))

    @property
    def length(self) -> Optional[int]:
        return len(self.values) if self.kind == "table" else None

    def terms(self, k: int) -> np.ndarray:
        """First ``k`` terms (fewer for an exhausted table)."""
        j = np.arange(1, k + 1, dtype=float)
        if self.kind == "power":
            return self.scale * self.ratio**j
        if self.kind == "index_power":
            return self.scale * j * self.ratio**j
        if self.kind == "constant":
            return np.full(k, self.scale)
        return np.asarray(self.values[:k], dtype=float)

    def __call__(self, j: int) -> float:
        if j < 1:
            raise DomainError("sequence indices start at 1")
        if self.kind == "table" and j > len(self.values):
            raise DomainError(f"table sequence has only {len(self.values)} terms")
        return float(self.terms(j)[-1])

    def abs_series_sum(self) -> float:
        """Closed form of ``sum_j |a_j|`` over all indices."""
        a, r = abs(self.scale), abs(self.ratio)
        if self.kind == "table":
            return math.fsum(abs(v) for v in self.values)
        if a == 0.0:
            return 0.0
        if self.kind == "constant" or r >= 1.0:
            raise UnsupportedSpecError(f"series of {self} diverges")
        if self.kind == "power":
            return a * r / (1.0 - r)
        return a * r / (1.0 - r) ** 2

    def abs_partial_sum(self, k: int) -> float:
        """Closed form of ``sum_{j<=k} |a_j|``."""
        if k < 0:
            raise DomainError("k must be nonnegative")
        a, r = abs(self.scale), abs(self.ratio)
        if self.kind == "table":
            return math.fsum(abs(v) for v in self.values[:k])
        if self.kind == "constant" or (self.kind == "power" and r == 1.0):
            return k * a
        if self.kind == "power":
            return a * r * (1.0 - r**k) / (1.0 - r)
        if r == 1.0:
            return a * k * (k + 1) / 2.0
        return a * r * (1.0 - (k + 1) * r**k + k * r ** (k + 1)) / (1.0 - r) ** 2

    def times(self, other: "IndexedSequence") -> "IndexedSequence":
        """Termwise product, when it stays in a closed-form family."""
        if self.kind == "table" or other.kind == "table":
            n = min(x for x in (self.length, other.length) if x is not None)
            return IndexedSequence.table(self.terms(n) * other.terms(n))

        def as_power(s):
            return (s.scale, 1.0) if s.kind == "constant" else (s.scale, s.ratio)

        if self.kind == "index_power" and other.kind == "index_power":
            raise UnsupportedSpecError("product of two index_power sequences")
        if "index_power" in (self.kind, other.kind):
            ip, pw = (self, other) if self.kind == "index_power" else (other, self)
            b, s = as_power(pw)
            return IndexedSequence.index_power(ip.scale * b, ip.ratio * s)
        (a, r), (b, s) = as_power(self), as_power(other)
        return IndexedSequence.power(a * b, r * s)

    def to_dict(self) -> dict:
        if self.kind == "table":
            return {"kind": "table", "values": list(self.values)}
        if self.kind == "constant":
            return {"kind": "constant", "scale": self.scale}
        return {"kind": self.kind, "scale": self.scale, "ratio": self.ratio}

    @classmethod
    def from_dict(cls, d: dict) -> "IndexedSequence":
        d = dict(d)
        kind = d.pop("kind", None)
        allowed = {"table": {"values"}, "constant": {"scale"}}.get(kind, {"scale", "ratio"})
        extra = set(d) - allowed
        if extra:
            raise ConfigurationError(f"unknown keys {sorted(extra)} for sequence kind {kind!r}")
        return cls(kind, **d) if kind != "table" else cls.table(d.get("values", ()))


class TabulatedJumpMap:
    """User-supplied jump map ``b_j`` tabulated on a grid of ``tau`` values.

    ``tables[j-1] = (tau_nodes, vectors)`` with ``vectors`` of shape
    ``(len(tau_nodes), 2n)``; values between nodes are linearly interpolated.
    """

    def __init__(self, tables):
        self.tables = []
        for taus, vecs in tables:
            taus = np.asarray(taus, dtype=float)
            vecs = np.atleast_2d(np.asarray(vecs, dtype=float))
            if taus.ndim != 1 or len(taus) != len(vecs) or np.any(np.diff(taus) <= 0):
                raise ConfigurationError("tabulated jump map needs increasing tau nodes")
            self.tables.append((taus, vecs))

    def __len__(self):
        return len(self.tables)

    def __call__(self, j: int, tau: float) -> np.ndarray:
        taus, vecs = self.tables[j - 1]
        return np.array([np.interp(tau, taus, vecs[:, c]) for c in range(vecs.shape[1])])


@dataclass(frozen=True)
class ImpulseSpec:
    """Law of the impulse process on ``[0, horizon]``.

    Parameters
    ----------
    horizon : float
        Final time ``T``.
    dimension : int
        State dimension ``2n``.
    bounds : IndexedSequence
        Interval lengths ``d_j``; ``tau_j`` lives in ``(0, d_j)``.
    coefficients : IndexedSequence
        Radial jump scales ``c_j``: ``b_j(tau) = c_j * tau * direction``.
    tau_law : {"uniform", "point"}
        Uniform on ``(0, d_j)`` or the point mass ``point_fraction * d_j``.
    direction : sequence of float, optional
        Jump direction, normalised on construction; defaults to ``e_1``.
    jump_map : callable, optional
        ``(j, tau) -> R^{2n}``; replaces the radial family when given.
    max_impulses : int
        Hard cap on the number of impulses per orbit.
    """

    horizon: float
    dimension: int = 2
    bounds: IndexedSequence = field(default_factory=lambda: IndexedSequence.power(1.0, 0.5))
    coefficients: IndexedSequence = field(
        default_factory=lambda: IndexedSequence.index_power(1.0, 0.25)
    )
    tau_law: str = "uniform"
    point_fraction: float = 0.5
    direction: Optional[tuple] = None
    jump_map: Optional[Callable[[int, float], np.ndarray]] = None
    max_impulses: int = 64

    def __post_init__(self):
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ConfigurationError("horizon must be a positive finite time")
        if self.dimension < 2 or self.dimension % 2:
            raise ConfigurationError("dimension must be an even integer >= 2")
        if self.tau_law not in ("uniform", "point"):
            raise ConfigurationError(f"unsupported tau law {self.tau_law!r}")
        if not 0.0 < self.point_fraction < 1.0:
            raise ConfigurationError("point_fraction must lie in (0, 1)")
        if self.max_impulses < 0:
            raise ConfigurationError("max_impulses must be nonnegative")
        d = self.bounds.terms(self.max_impulses)
        if np.any(~(d > 0)) or np.any(~np.isfinite(d)):
            raise ConfigurationError("interval bounds d_j must be positive and finite")
        if self.direction is None:
            e = np.zeros(self.dimension)
            e[0] = 1.0
        else:
            e = np.asarray(self.direction, dtype=float)
            if e.shape != (self.dimension,) or not np.linalg.norm(e) > 0:
                raise ConfigurationError("direction must be a nonzero vector of length 2n")
            e = e / np.linalg.norm(e)
        object.__setattr__(self, "direction", tuple(float(x) for x in e))

    @property
    def index_limit(self) -> int:
        """Largest index an orbit can reach (cap or table exhaustion)."""
        lims = [self.max_impulses]
        for s in (self.bounds, self.coefficients):
            if s.length is not None:
                lims.append(s.length)
        if isinstance(self.jump_map, TabulatedJumpMap):
            lims.append(len(self.jump_map))
        return min(lims)

    @property
    def radial(self) -> bool:
        return self.jump_map is None

    def jumps(self, taus: np.ndarray) -> np.ndarray:
        """Jump vectors ``b_j(tau_j)`` for ``j = 1..len(taus)``."""
        k = len(taus)
        if self.jump_map is not None:
            out = np.array([np.asarray(self.jump_map(j, t), dtype=float)
                            for j, t in enumerate(taus, start=1)])
            return out.reshape(k, self.dimension)
        c = self.coefficients.terms(k)
        return (c * taus)[:, None] * np.asarray(self.direction)[None, :]

    def with_jump_scale(self, factor: float) -> "ImpulseSpec":
        """Same law with every jump multiplied by ``factor``."""
        if self.jump_map is not None:
            base = self.jump_map
            return _replace(self, jump_map=lambda j, t: factor * np.asarray(base(j, t)))
        c = self.coefficients
        if c.kind == "table":
            scaled = IndexedSequence.table([factor * v for v in c.values])
        else:
            scaled = IndexedSequence(c.kind, factor * c.scale, c.ratio)
        return _replace(self, coefficients=scaled)

    def to_dict(self) -> dict:
        if self.jump_map is not None:
            raise UnsupportedSpecError("a callable jump map cannot be serialised")
        return {
            "bounds": self.bounds.to_dict(),
            "coefficients": self.coefficients.to_dict(),
            "tau_law": self.tau_law,
            "point_fraction": self.point_fraction,
            "direction": list(self.direction),
            "max_impulses": self.max_impulses,
        }


def _replace(spec, **changes):
    from dataclasses import replace

    return replace(spec, **changes)


@dataclass(frozen=True)
class SampleOrbit:
    """One realisation: times ``xi``, draws ``tau``, jumps ``Delta`` (rows).

    ``stop_reason`` records why the orbit ended: ``horizon`` (next time would
    reach ``T``), ``cap``, ``exhausted`` (finite tables) or ``resolution``
    (the next increment vanishes in floating point).  ``tail_bound`` bounds
    the jump mass of the impulses that were cut off.
    """

    times: np.ndarray
    taus: np.ndarray
    jumps: np.ndarray
    horizon: float
    seed: int = 0
    orbit_index: int = 0
    stop_reason: str = "horizon"
    tail_bound: float = 0.0

    def __post_init__(self):
        for name in ("times", "taus", "jumps"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def size(self) -> int:
        return len(self.times)

    @property
    def jump_mass(self) -> float:
        return math.fsum(np.linalg.norm(self.jumps, axis=1)) if self.size else 0.0


def _uniforms(seed: int, orbit_index: int, size: int) -> np.ndarray:
    """Strictly interior uniforms on (0, 1) from the orbit's own Philox stream."""
    bitgen = np.random.Philox(key=int(seed) % 2**128, counter=[0, 0, int(orbit_index) % 2**64, 0])
    k = np.random.Generator(bitgen).integers(0, 2**52, size=size, dtype=np.int64)
    return (k.astype(float) + 0.5) * 2.0**-52


def _draw(spec: ImpulseSpec, seed: int, orbit_index: int):
    limit = spec.index_limit
    d = spec.bounds.terms(limit)
    if spec.tau_law == "uniform":
        taus = d * _uniforms(seed, orbit_index, limit)
    else:
        taus = spec.point_fraction * d
    taus = np.minimum(taus, np.nextafter(d, 0.0))
    xi = np.cumsum(taus)
    # Keep the longest prefix with xi strictly increasing and strictly below T.
    ok = xi < spec.horizon
    if limit:
        prev = np.concatenate(([0.0], xi[:-1]))
        ok &= xi > prev
    bad = np.flatnonzero(~ok)
    k = int(bad[0]) if bad.size else limit
    if k < limit:
        reason = "horizon" if xi[k] >= spec.horizon else "resolution"
    elif limit == spec.max_impulses:
        reason = "cap"
    else:
        reason = "exhausted"
    return xi[:k], taus[:k], reason


def _tail_bound(spec: ImpulseSpec, k: int, reason: str) -> float:
    if reason in ("horizon", "exhausted") or spec.jump_map is not None:
        return 0.0
    n = k + _TAIL_TERMS
    if spec.coefficients.length is not None:
        n = min(n, spec.coefficients.length)
    if spec.bounds.length is not None:
        n = min(n, spec.bounds.length)
    c = np.abs(spec.coefficients.terms(n))[k:]
    d = spec.bounds.terms(n)[k:]
    return math.fsum(c * d)


def sample_orbit(spec: ImpulseSpec, seed: int, orbit_index: int = 0) -> SampleOrbit:
    """Draw one orbit; a pure function of ``(spec, seed, orbit_index)``."""
    xi, taus, reason = _draw(spec, seed, orbit_index)
    return SampleOrbit(
        times=xi,
        taus=taus,
        jumps=spec.jumps(taus),
        horizon=spec.horizon,
        seed=int(seed),
        orbit_index=int(orbit_index),
        stop_reason=reason,
        tail_bound=_tail_bound(spec, len(xi), reason),
    )


def _pmap(fn, items, workers):
    if workers is None or workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def sample_orbits(spec: ImpulseSpec, n_orbits: int, seed: int, workers: int = 1) -> list:
    """Orbits ``0..n_orbits-1``; identical for every worker count."""
    if n_orbits < 1:
        raise ConfigurationError("n_orbits must be >= 1")
    return _pmap(lambda i: sample_orbit(spec, seed, i), range(n_orbits), workers)


def fixed_orbit(times, jumps, horizon: float, dimension: int = 2) -> SampleOrbit:
    """A deterministic orbit with prescribed times and jump vectors."""
    times = np.asarray(times, dtype=float)
    if len(times):
        jumps = np.atleast_2d(np.asarray(jumps, dtype=float))
        if jumps.shape[0] != len(times):
            raise ConfigurationError("one jump vector per impulse time is required")
    else:
        jumps = np.zeros((0, dimension))
    if np.any(np.diff(times) <= 0) or (len(times) and (times[0] <= 0 or times[-1] >= horizon)):
        raise ConfigurationError("impulse times must be strictly increasing inside (0, T)")
    taus = np.diff(np.concatenate(([0.0], times)))
    return SampleOrbit(times, taus, jumps, float(horizon), stop_reason="exhausted")


def counting_process(orbit: SampleOrbit, t: float) -> int:
    """``N(t) = #{j : xi_j <= t}``."""
    if not 0.0 <= t <= orbit.horizon:
        raise DomainError(f"t={t} outside [0, {orbit.horizon}]")
    return int(np.searchsorted(orbit.times, t, side="right"))


@dataclass(frozen=True)
class BEstimate:
    mc_mean: float
    mc_stderr: float
    n_orbits: int
    mean_impulses: float

    def to_dict(self):
        return {
            "mc_mean": self.mc_mean,
            "mc_stderr": self.mc_stderr,
            "n_orbits": self.n_orbits,
            "mean_impulses": self.mean_impulses,
        }


def _orbit_mass(spec: ImpulseSpec, seed: int, i: int):
    xi, taus, _ = _draw(spec, seed, i)
    if spec.radial:
        c = np.abs(spec.coefficients.terms(len(taus)))
        return math.fsum(c * taus), len(xi)
    return math.fsum(np.linalg.norm(spec.jumps(taus), axis=1)), len(xi)


def estimate_B(spec: ImpulseSpec, n_orbits: int, seed: int, workers: int = 1) -> BEstimate:
    """Monte Carlo estimate of ``E[sum_j |b_j(tau_j)|]`` with its standard error."""
    if n_orbits < 1:
        raise ConfigurationError("n_orbits must be >= 1")
    res = _pmap(lambda i: _orbit_mass(spec, seed, i), range(n_orbits), workers)
    mass = np.array([m for m, _ in res])
    mean = math.fsum(mass) / n_orbits
    stderr = float(np.std(mass, ddof=1) / math.sqrt(n_orbits)) if n_orbits > 1 else math.nan
    return BEstimate(mean, stderr, n_orbits, math.fsum(k for _, k in res) / n_orbits)


def _sup_bound(spec: ImpulseSpec) -> float:
    return float(np.max(spec.bounds.terms(spec.index_limit))) if spec.index_limit else 0.0


def analytic_B_bound(spec: ImpulseSpec, loose: bool = True) -> float:
    """Closed-form upper bound for ``B``.

    With ``loose=True`` each draw is bounded by ``tau_j <= 1`` (requires every
    ``d_j <= 1``), giving ``sum_j |c_j|``; otherwise by ``tau_j < d_j``,
    giving ``sum_j |c_j| d_j``.  Only radial jump families are supported.
    """
    if not spec.radial:
        raise UnsupportedSpecError("no closed form for a user-supplied jump map")
    c = spec.coefficients
    if c.kind != "table" and c.scale == 0.0:
        return 0.0
    if loose:
        if _sup_bound(spec) > 1.0:
            raise UnsupportedSpecError("the tau <= 1 bound needs every d_j <= 1")
        return c.abs_series_sum()
    return c.times(spec.bounds).abs_series_sum()


def partial_jump_bound(spec: ImpulseSpec, k: int) -> float:
    """``sum_{j<=k} |c_j|``: the loose bound on the first ``k`` jumps."""
    if not spec.radial:
        raise UnsupportedSpecError("no closed form for a user-supplied jump map")
    return spec.coefficients.abs_partial_sum(k)


def orbit_rows(orbits: Sequence[SampleOrbit]):
    """Rows ``(orbit_id, j, xi_j, tau_j, |Delta_j|)``."""
    for o in orbits:
        norms = np.linalg.norm(o.jumps, axis=1) if o.size else []
        for j in range(o.size):
            yield (o.orbit_index, j + 1, o.times[j], o.taus[j], norms[j])


def write_orbits_csv(path, orbits):
    return write_csv(path, ("orbit_id", "j", "xi", "tau", "jump_norm"), orbit_rows(orbits))
