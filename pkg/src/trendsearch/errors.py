"""Exception types shared across the package."""


class TrendSearchError(Exception):
    """Base class for all package errors."""


class DomainError(TrendSearchError, ValueError):
    """An argument violates a documented precondition."""


class SpaceError(TrendSearchError, ValueError):
    """A configuration space document or configuration is invalid."""


class InfeasibleConfigError(TrendSearchError):
    """A sampled configuration cannot be turned into a runnable model
    (e.g. convolution/pooling arithmetic collapses the sequence length)."""


class NumericalError(TrendSearchError):
    """A tensor contained NaN/Inf after a forward or backward pass."""


class TrainingDivergedError(TrendSearchError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, message: str = ""):
        self.epoch = epoch
        super().__init__(message or f"training diverged at epoch {epoch}")


class InvalidPlanError(TrendSearchError, ValueError):
    """A walk-forward plan would contain an empty train/val/test range."""
