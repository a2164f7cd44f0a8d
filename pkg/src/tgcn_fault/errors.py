"""Exception hierarchy shared by the library and the CLI."""


class TgcnFaultError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1


class ShapeError(TgcnFaultError, ValueError):
    """Operand shapes are incompatible."""

    exit_code = 2


class ContractError(TgcnFaultError, ValueError):
    """A precondition of an operation was violated."""

    exit_code = 2


class ConfigError(TgcnFaultError, ValueError):
    """Invalid run configuration. ``field`` names the offending key."""

    exit_code = 1

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class DataError(TgcnFaultError, ValueError):
    """Input data could not be read or is malformed."""

    exit_code = 2


class TrainingDivergence(TgcnFaultError, RuntimeError):
    """Training produced a non-finite loss."""

    exit_code = 3

    def __init__(self, epoch, batch, value):
        super().__init__(f"non-finite loss {value!r} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch
