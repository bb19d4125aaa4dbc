"""Dual variational solver for impulsive Hamiltonian systems with random impulses."""

from .critical_point import (
    GeometryReport,
    HypothesisReport,
    MountainPassResult,
    RecoveredU,
    find_critical_point,
    mountain_pass_geometry,
    recover_u,
    verify_hypotheses,
)
from .dual_action import chi, chi_gradient, chi_pairing, phi
from .errors import (
    ConfigurationError,
    DirichletError,
    DomainError,
    IntegrationError,
    NumericalError,
    UnsupportedSpecError,
)
from .flow import first_return_time, integrate_segment, propagate_orbit
from .function_space import EnsembleProcess, GridSpec, OrbitGrid, estimate_K
from .hamiltonian import PowerLaw, alpha_star, conjugate_exponent, quadratic_hamiltonian
from .impulse_process import ImpulseSpec, analytic_B_bound, estimate_B, sample_orbits
from .scenario import Scenario, builtin, load_scenario
from .verification import ResidualReport, pairing_battery, residuals

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "DirichletError",
    "DomainError",
    "EnsembleProcess",
    "GeometryReport",
    "GridSpec",
    "HypothesisReport",
    "ImpulseSpec",
    "IntegrationError",
    "MountainPassResult",
    "NumericalError",
    "OrbitGrid",
    "PowerLaw",
    "RecoveredU",
    "ResidualReport",
    "Scenario",
    "UnsupportedSpecError",
    "alpha_star",
    "analytic_B_bound",
    "builtin",
    "chi",
    "chi_gradient",
    "chi_pairing",
    "conjugate_exponent",
    "estimate_B",
    "estimate_K",
    "find_critical_point",
    "first_return_time",
    "integrate_segment",
    "load_scenario",
    "mountain_pass_geometry",
    "pairing_battery",
    "phi",
    "propagate_orbit",
    "quadratic_hamiltonian",
    "recover_u",
    "residuals",
    "sample_orbits",
    "verify_hypotheses",
]
