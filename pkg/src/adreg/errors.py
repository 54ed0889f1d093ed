"""Exception types raised across the package."""


class InvalidInputError(ValueError):
    """Non-finite or malformed numeric input."""


class InvalidArgumentError(ValueError):
    """An argument is outside its permitted range."""


class DomainError(ValueError):
    """A closed-form derivative was evaluated outside its open domain."""


class FormatError(ValueError):
    """A binary file does not follow the expected layout."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class OracleFailure(RuntimeError):
    """The finite-difference oracle hit a non-finite function value."""

    def __init__(self, coordinate: int, value: float):
        super().__init__(f"non-finite evaluation {value!r} while perturbing coordinate {coordinate}")
        self.coordinate = coordinate
        self.value = value


class DivergenceError(RuntimeError):
    """Training produced a non-finite or exploding loss."""

    def __init__(self, epoch: int, loss: float):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss!r})")
        self.epoch = epoch
        self.loss = loss


class ConfigError(ValueError):
    """Experiment configuration failed validation."""
