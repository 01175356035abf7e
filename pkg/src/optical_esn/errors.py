"""Exception hierarchy."""


class OpticalESNError(Exception):
    """Base class for all package errors."""


class ConfigError(OpticalESNError, ValueError):
    """Invalid parameters or configuration file contents."""


class DimensionError(OpticalESNError, ValueError):
    """Vector or matrix shapes do not line up."""


class DivergenceError(OpticalESNError, ArithmeticError):
    """Numerical integration produced overflow or NaN."""


class MemoryBudgetError(OpticalESNError, MemoryError):
    """A requested allocation exceeds the configured memory budget."""


class SingularSystemError(OpticalESNError, ArithmeticError):
    """Normal equations could not be factorized."""


class StageError(OpticalESNError):
    """An experiment stage failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
