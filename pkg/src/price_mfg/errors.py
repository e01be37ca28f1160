"""Exception hierarchy shared by the solvers and the CLI."""


class PriceMFGError(Exception):
    """Base class for all package errors."""


class DomainError(PriceMFGError, ValueError):
    """Invalid or non-finite input data."""


class ConfigError(PriceMFGError, ValueError):
    """Bad configuration: missing keys, unsatisfiable CFL, grid mismatch."""


class NumericalBlowUp(PriceMFGError, FloatingPointError):
    """A solver produced NaN/inf; ``time_index`` says where."""

    def __init__(self, message, time_index=None):
        super().__init__(message)
        self.time_index = time_index


class NonConvergence(PriceMFGError, RuntimeError):
    """An iteration hit its budget; ``history`` holds the residual trace."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


class InconsistencyError(PriceMFGError, RuntimeError):
    """A converged answer violates a constraint it should satisfy."""
