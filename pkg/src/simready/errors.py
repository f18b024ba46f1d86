class SimreadyError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(SimreadyError, ValueError):
    """Invalid parameters or configuration."""


class SingularPointError(SimreadyError, ValueError):
    """Field derivatives requested at a point where they do not exist."""


class EmptyTubeError(SimreadyError):
    """The tubular neighbourhood contains no sample points."""


class EmptyContourError(SimreadyError):
    """The field has no sign change inside the box."""


class WeightFileError(SimreadyError, ValueError):
    """Malformed or inconsistent network weight file."""


class ClassificationError(SimreadyError):
    """Background grid classification failed (domain outside the box, projection failure)."""


class SolverError(SimreadyError):
    """Linear solve did not reach the requested tolerance."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class TrainingDivergedError(SimreadyError):
    """Loss became non-finite during training."""
