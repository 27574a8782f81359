"""Exception hierarchy shared by all modules."""


class FracLHFError(Exception):
    """Base class for all package errors."""


class ConfigurationError(FracLHFError, ValueError):
    """Invalid user input: sizes, shell labels, config files, fit windows."""


class DomainError(FracLHFError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class ConsistencyError(FracLHFError):
    """Objects that should describe the same system do not agree."""


class SolverError(FracLHFError, RuntimeError):
    """A numerical procedure failed.

    Parameters
    ----------
    message : str
        Human readable description.
    diagnostics : dict, optional
        Solver state at failure (energy bracket, iteration history, ...).
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class ConvergenceError(SolverError):
    """Self-consistent iteration did not reach the tolerance."""


class UnboundSpeciesError(SolverError):
    """A required orbital has no bound solution in the current potential."""
