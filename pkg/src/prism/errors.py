"""Exception hierarchy shared by the library and the CLI."""


class PrismError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigError(PrismError, ValueError):
    """Invalid configuration, shapes, or geometry."""

    exit_code = 2


class DataError(PrismError, ValueError):
    """Unreadable or malformed input data."""

    exit_code = 3


class CheckpointError(PrismError):
    """Corrupt checkpoint or checkpoint incompatible with a run spec."""

    exit_code = 4


class NumericError(PrismError, FloatingPointError):
    """Non-finite values encountered during training or differentiation."""

    exit_code = 5
