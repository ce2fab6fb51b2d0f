"""Exception types shared across the package."""


class VotecrestError(Exception):
    """Base class for all package errors."""


class ConfigurationError(VotecrestError):
    """Invalid configuration: bad dimensions, unknown keys, malformed files."""


class InputError(VotecrestError):
    """Malformed runtime input: wrong shape, non-finite values, label out of range."""


class TrainingError(VotecrestError):
    """Training diverged or could not proceed."""

    def __init__(self, message: str, epoch: int | None = None):
        if epoch is not None:
            message = f"{message} (epoch {epoch})"
        super().__init__(message)
        self.epoch = epoch


class AttackError(VotecrestError):
    """An attack failed on one example; reported per example, never fatal to a sweep."""


class PreconditionError(VotecrestError):
    """An operation was invoked outside its stated precondition."""
