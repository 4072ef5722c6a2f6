"""Exception types shared across the package."""


class PhotonmuxError(Exception):
    """Base class for all package errors."""


class ConfigError(PhotonmuxError):
    """Invalid channel or experiment configuration."""


class DegenerateLikelihoodError(PhotonmuxError):
    """All-zero likelihood at some chip (impossible rate/count pair)."""


class BudgetError(PhotonmuxError):
    """A truncation or sampling budget could not be met."""


class InfeasibleError(PhotonmuxError):
    """A constrained optimization has no feasible point."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class SpecValidationError(PhotonmuxError):
    """Experiment spec failed validation; carries the offending field path."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
