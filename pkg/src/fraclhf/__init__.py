"""Localized Hartree-Fock exchange for atoms with fractional electron numbers."""

__version__ = "0.1.0"

from .errors import (
    ConfigurationError,
    ConsistencyError,
    ConvergenceError,
    DomainError,
    FracLHFError,
    SolverError,
    UnboundSpeciesError,
)
from .lhf import ScfParams, ScfResult, potential_jump, scf
from .occupations import OccupationSpec, Shell, beta_from_alpha
from .radial import RadialGrid, build_grid

__all__ = [
    "__version__",
    "ConfigurationError",
    "ConsistencyError",
    "ConvergenceError",
    "DomainError",
    "FracLHFError",
    "SolverError",
    "UnboundSpeciesError",
    "ScfParams",
    "ScfResult",
    "scf",
    "potential_jump",
    "OccupationSpec",
    "Shell",
    "beta_from_alpha",
    "RadialGrid",
    "build_grid",
]
