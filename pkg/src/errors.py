"""
Exception hierarchy shared by the constitutive, FEM and training modules.
"""


class SPDNNError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1


class ArgumentError(SPDNNError, ValueError):
    """Invalid argument (shape, layout, parameter range)."""


class ConfigError(SPDNNError):
    exit_code = 2


class DataError(SPDNNError):
    exit_code = 3


class TrainingError(SPDNNError):
    exit_code = 4


class SolverError(SPDNNError):
    """
    Linear or scalar solver failure.

    Carries whatever diagnostic the failing solver has: a condition
    estimate, a numerical rank, or the last residual.
    """

    def __init__(self, message, condition=None, rank=None, residual=None):
        super().__init__(message)
        self.condition = condition
        self.rank = rank
        self.residual = residual


class ElementError(SPDNNError):
    """Singular or inverted element Jacobian."""

    def __init__(self, message, element=None):
        super().__init__(message)
        self.element = element


class StepError(SPDNNError):
    """Newton iterations of one time step did not converge."""

    def __init__(self, message, residuals=None, step=None):
        super().__init__(message)
        self.residuals = list(residuals or [])
        self.step = step


class NonFiniteLossError(TrainingError):
    """A loss evaluation produced NaN/inf at a given time step."""

    def __init__(self, message, step=None, case=None):
        super().__init__(message)
        self.step = step
        self.case = case
