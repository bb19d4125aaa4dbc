"""Scenario configuration: one JSON document describing a full experiment.

Every block is parsed strictly (unknown keys are rejected) and defaults are
filled in, so ``Scenario.from_dict(s.to_dict()) == s`` and re-serialising a
complete config returns it unchanged.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from functools import cached_property
from pathlib import Path
from typing import Optional

from .errors import ConfigurationError
from .function_space import GridSpec, OrbitGrid, coarsen_orbit
from .hamiltonian import PowerLaw, quadratic_hamiltonian, zero_hamiltonian
from .impulse_process import ImpulseSpec, IndexedSequence, fixed_orbit, sample_orbits

__all__ = [
    "EnsembleOptions",
    "OptimizerOptions",
    "Tolerances",
    "Scenario",
    "BUILTIN_SCENARIOS",
    "builtin",
    "load_scenario",
]


def _strict(cls, block, where):
    if block is None:
        return cls()
    if not isinstance(block, dict):
        raise ConfigurationError(f"{where} must be an object")
    names = {f.name for f in fields(cls)}
    unknown = set(block) - names
    if unknown:
        raise ConfigurationError(f"unknown keys in {where}: {sorted(unknown)}")
    try:
        return cls(**block)
    except TypeError as exc:
        raise ConfigurationError(f"{where}: {exc}") from None


@dataclass(frozen=True)
class EnsembleOptions:
    """Monte Carlo ensemble: ``n_orbits`` for sampling and ``B``; ``solve_orbits`` for the search."""

    n_orbits: int = 1000
    seed: int = 0
    workers: int = 1
    solve_orbits: int = 1

    def __post_init__(self):
        if int(self.n_orbits) < 1:
            raise ConfigurationError("ensemble.n_orbits must be >= 1")
        if int(self.solve_orbits) < 1:
            raise ConfigurationError("ensemble.solve_orbits must be >= 1")
        if int(self.workers) < 1:
            raise ConfigurationError("ensemble.workers must be >= 1")


@dataclass(frozen=True)
class OptimizerOptions:
    """Mountain-pass search and geometry settings.

    ``method`` is ``auto`` (mountain pass when the geometry check passes,
    otherwise descent), ``mountain_pass`` or ``descent``.
    """

    method: str = "auto"
    path_nodes: int = 11
    gtol: float = 1e-6
    max_iter: int = 5000
    redistribute_every: int = 10
    armijo_step: float = 1.0
    armijo_shrink: float = 0.5
    armijo_c: float = 1e-4
    tie_tol: float = 1e-12
    stall_window: int = 200
    stall_tol: float = 1e-10
    refine_max_iter: int = 200
    e_norm: Optional[float] = None
    e_direction: Optional[list] = None
    e_norm_cap: float = 1e6
    rim_samples: int = 200
    k_family: str = "sine"
    k_samples: int = 100
    k_working: Optional[float] = None
    k_margin: float = 1.05

    def __post_init__(self):
        if self.method not in ("auto", "mountain_pass", "descent"):
            raise ConfigurationError(f"unknown optimizer method {self.method!r}")
        if self.path_nodes < 3:
            raise ConfigurationError("optimizer.path_nodes must be >= 3")
        if not self.gtol > 0:
            raise ConfigurationError("optimizer.gtol must be positive")
        if self.max_iter < 0 or self.refine_max_iter < 0:
            raise ConfigurationError("iteration caps must be >= 0")
        if not 0 < self.armijo_shrink < 1 or not 0 < self.armijo_c < 1:
            raise ConfigurationError("Armijo shrink and slope factor must lie in (0, 1)")
        if self.rim_samples < 1:
            raise ConfigurationError("optimizer.rim_samples must be >= 1")


@dataclass(frozen=True)
class Tolerances:
    """Acceptance thresholds for residuals plus sampling sizes for checks."""

    ode: float = 1e-3
    jump: float = 1e-10
    boundary: float = 1e-3
    pairing: float = 1e-5
    integrator: float = 1e-10
    hypothesis_samples: int = 10_000
    battery_tests: int = 20


def _hamiltonian(block, dimension):
    if not isinstance(block, dict) or "kind" not in block:
        raise ConfigurationError("hamiltonian block needs a 'kind'")
    kind = block["kind"]
    if kind == "power":
        if set(block) - {"kind", "alpha", "q"}:
            raise ConfigurationError(f"unknown keys in hamiltonian: {sorted(set(block) - {'kind', 'alpha', 'q'})}")
        return PowerLaw(float(block["alpha"]), float(block["q"]))
    if kind in ("quadratic", "zero"):
        if set(block) != {"kind"}:
            raise ConfigurationError(f"the {kind} hamiltonian takes no parameters")
        return (quadratic_hamiltonian if kind == "quadratic" else zero_hamiltonian)(dimension)
    raise ConfigurationError(f"unknown hamiltonian kind {kind!r}")


_IMPULSE_KEYS = {
    "none": {"law"},
    "fixed": {"law", "times", "jumps"},
    "sampled": {"law", "bounds", "coefficients", "tau_law", "point_fraction", "direction",
                "max_impulses"},
}


def _impulses(block, horizon, dimension):
    block = block or {"law": "none"}
    law = block.get("law")
    if law not in _IMPULSE_KEYS:
        raise ConfigurationError(f"impulses.law must be one of {sorted(_IMPULSE_KEYS)}")
    unknown = set(block) - _IMPULSE_KEYS[law]
    if unknown:
        raise ConfigurationError(f"unknown keys in impulses: {sorted(unknown)}")
    if law == "sampled":
        kw = {k: v for k, v in block.items() if k != "law"}
        for key in ("bounds", "coefficients"):
            if key in kw:
                kw[key] = IndexedSequence.from_dict(kw[key])
        if "direction" in kw:
            kw["direction"] = tuple(kw["direction"])
        return ImpulseSpec(horizon=horizon, dimension=dimension, **kw)
    return None


@dataclass(frozen=True)
class Scenario:
    """A complete experiment: system, impulse law, grid and numerical options."""

    name: str
    horizon: float
    dimension: int
    hamiltonian_block: dict
    impulses_block: dict
    grid: GridSpec = field(default_factory=GridSpec)
    ensemble: EnsembleOptions = field(default_factory=EnsembleOptions)
    optimizer: OptimizerOptions = field(default_factory=OptimizerOptions)
    tolerances: Tolerances = field(default_factory=Tolerances)

    def __post_init__(self):
        if not self.horizon > 0:
            raise ConfigurationError("horizon must be positive")
        if self.dimension < 2 or self.dimension % 2:
            raise ConfigurationError("dimension must be an even integer >= 2")
        # validate eagerly so that bad configs fail on load
        self.hamiltonian  # noqa: B018
        self.impulse_spec  # noqa: B018
        if self.impulses_block.get("law") == "fixed":
            self._fixed()

    @cached_property
    def hamiltonian(self):
        return _hamiltonian(self.hamiltonian_block, self.dimension)

    @cached_property
    def impulse_spec(self) -> Optional[ImpulseSpec]:
        return _impulses(self.impulses_block, self.horizon, self.dimension)

    @property
    def law(self) -> str:
        return self.impulses_block.get("law", "none")

    def _fixed(self):
        b = self.impulses_block
        return fixed_orbit(b["times"], b["jumps"], self.horizon, self.dimension)

    def sampled_orbits(self, n: Optional[int] = None, workers: Optional[int] = None):
        """Orbits ``0..n-1`` of the impulse law (the fixed orbit repeated for ``fixed``)."""
        n = self.ensemble.n_orbits if n is None else n
        if n < 1:
            raise ConfigurationError("n_orbits must be >= 1")
        if self.law == "sampled":
            return sample_orbits(self.impulse_spec, n, self.ensemble.seed,
                                 workers or self.ensemble.workers)
        if self.law == "fixed":
            return [self._fixed()] * n
        return [fixed_orbit([], [], self.horizon, self.dimension)] * n

    def solve_orbits(self):
        """The orbits used by the critical-point search, coarsened to the grid."""
        return [coarsen_orbit(o, self.grid) for o in self.sampled_orbits(self.ensemble.solve_orbits)]

    def grids(self, orbits=None):
        """One grid per orbit; raw orbits are coarsened first, so any sample is accepted."""
        orbits = self.solve_orbits() if orbits is None else orbits
        cache = {}
        out = []
        for o in orbits:
            times = coarsen_orbit(o, self.grid).times
            key = times.tobytes()
            if key not in cache:
                cache[key] = OrbitGrid(self.horizon, times, self.grid)
            out.append(cache[key])
        return tuple(out)

    def with_overrides(self, seed=None, n_orbits=None, gtol=None, workers=None) -> "Scenario":
        d = self.to_dict()
        if seed is not None:
            d["ensemble"]["seed"] = int(seed)
        if n_orbits is not None:
            d["ensemble"]["n_orbits"] = int(n_orbits)
        if workers is not None:
            d["ensemble"]["workers"] = int(workers)
        if gtol is not None:
            d["optimizer"]["gtol"] = float(gtol)
        return Scenario.from_dict(d)

    def with_jump_scale(self, factor: float, name: Optional[str] = None) -> "Scenario":
        d = self.to_dict()
        block = d["impulses"]
        if block["law"] == "sampled":
            c = block["coefficients"]
            if c["kind"] == "table":
                c["values"] = [factor * x for x in c["values"]]
            else:
                c["scale"] = factor * c["scale"]
        elif block["law"] == "fixed":
            block["jumps"] = [[factor * x for x in row] for row in block["jumps"]]
        d["name"] = name or f"{self.name}-x{factor:g}"
        return Scenario.from_dict(d)

    def to_dict(self) -> dict:
        imp = dict(self.impulses_block)
        if self.law == "sampled":
            imp = {"law": "sampled", **self.impulse_spec.to_dict()}
        elif self.law == "fixed":
            o = self._fixed()
            imp = {"law": "fixed", "times": o.times.tolist(), "jumps": o.jumps.tolist()}
        return {
            "name": self.name,
            "horizon": self.horizon,
            "dimension": self.dimension,
            "hamiltonian": dict(self.hamiltonian_block),
            "impulses": imp,
            "grid": self.grid.to_dict(),
            "ensemble": asdict(self.ensemble),
            "optimizer": asdict(self.optimizer),
            "tolerances": asdict(self.tolerances),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        if not isinstance(d, dict):
            raise ConfigurationError("a scenario must be a JSON object")
        allowed = {"name", "horizon", "dimension", "hamiltonian", "impulses", "grid", "ensemble",
                   "optimizer", "tolerances"}
        unknown = set(d) - allowed
        if unknown:
            raise ConfigurationError(f"unknown top-level keys: {sorted(unknown)}")
        for key in ("horizon", "hamiltonian"):
            if key not in d:
                raise ConfigurationError(f"missing required key {key!r}")
        return cls(
            name=str(d.get("name", "scenario")),
            horizon=float(d["horizon"]),
            dimension=int(d.get("dimension", 2)),
            hamiltonian_block=dict(d["hamiltonian"]),
            impulses_block=dict(d.get("impulses") or {"law": "none"}),
            grid=_strict(GridSpec, d.get("grid"), "grid"),
            ensemble=_strict(EnsembleOptions, d.get("ensemble"), "ensemble"),
            optimizer=_strict(OptimizerOptions, d.get("optimizer"), "optimizer"),
            tolerances=_strict(Tolerances, d.get("tolerances"), "tolerances"),
        )

    def __eq__(self, other):
        return isinstance(other, Scenario) and self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(json.dumps(self.to_dict(), sort_keys=True))


_EXAMPLE = {
    "horizon": 1.0,
    "dimension": 2,
    "hamiltonian": {"kind": "power", "alpha": 1.0, "q": 10.0},
    "impulses": {
        "law": "sampled",
        "bounds": {"kind": "power", "scale": 1.0, "ratio": 0.5},
        "coefficients": {"kind": "index_power", "scale": 1.0, "ratio": 0.25},
        "tau_law": "uniform",
        "direction": [1.0, 0.0],
        "max_impulses": 64,
    },
}

BUILTIN_SCENARIOS = {
    # |u|^10 with d_j = 2^-j, c_j = j / 4^j, uniform tau on (0, d_j)
    "example-4.1": {"name": "example-4.1", **_EXAMPLE, "ensemble": {"n_orbits": 10_000}},
    # the same law with tau_j = d_j / 2 and three impulses: a deterministic orbit
    "example-4.1-fixed": {
        "name": "example-4.1-fixed",
        **_EXAMPLE,
        "impulses": {**_EXAMPLE["impulses"], "tau_law": "point", "max_impulses": 3},
        "ensemble": {"n_orbits": 1},
    },
    "example-4.1-x10": {
        "name": "example-4.1-x10",
        **_EXAMPLE,
        "impulses": {**_EXAMPLE["impulses"],
                     "coefficients": {"kind": "index_power", "scale": 10.0, "ratio": 0.25}},
        "ensemble": {"n_orbits": 10_000},
    },
    "example-4.1-free": {
        "name": "example-4.1-free",
        **_EXAMPLE,
        "impulses": {"law": "none"},
        "ensemble": {"n_orbits": 1},
    },
    "quadratic": {
        "name": "quadratic",
        "horizon": 1.0,
        "dimension": 2,
        "hamiltonian": {"kind": "quadratic"},
        "impulses": {"law": "none"},
        "ensemble": {"n_orbits": 1},
        "optimizer": {"method": "descent", "e_norm": 1.0},
    },
    "quadratic-impulses": {
        "name": "quadratic-impulses",
        "horizon": 1.0,
        "dimension": 2,
        "hamiltonian": {"kind": "quadratic"},
        "impulses": {"law": "fixed", "times": [0.3, 0.55, 0.8],
                     "jumps": [[0.2, 0.0], [0.0, -0.1], [0.05, 0.05]]},
        "ensemble": {"n_orbits": 1},
        "optimizer": {"method": "descent", "e_norm": 1.0},
    },
}


def builtin(name: str) -> Scenario:
    if name not in BUILTIN_SCENARIOS:
        raise ConfigurationError(f"unknown builtin scenario {name!r}; "
                                 f"choose from {sorted(BUILTIN_SCENARIOS)}")
    return Scenario.from_dict(json.loads(json.dumps(BUILTIN_SCENARIOS[name])))


def load_scenario(source) -> Scenario:
    """A builtin name or a path to a JSON config file."""
    if isinstance(source, Scenario):
        return source
    if isinstance(source, dict):
        return Scenario.from_dict(source)
    if str(source) in BUILTIN_SCENARIOS:
        return builtin(str(source))
    path = Path(source)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"invalid JSON in {path}: {exc}") from None
    return Scenario.from_dict(data)
