"""Exception hierarchy shared by the library and the CLI.

Each class carries the process exit code the CLI reports for it.
"""


class WeakMilError(Exception):
    """Base class for all expected failures."""

    exit_code: int = 1


class ConfigError(WeakMilError):
    """Invalid configuration, flag combination or geometry."""

    exit_code = 2


class DataError(WeakMilError):
    """Input data is missing, malformed or unusable."""

    exit_code = 3


class FormatError(DataError):
    """Bad magic, unsupported version or size mismatch in a binary file."""


class TruncatedFileError(DataError):
    """Payload shorter than its header declares."""


class EmptyInputError(DataError):
    """An operation received zero frames, segments, bags or scores."""


class ShapeError(DataError):
    """Array dimensions disagree with what an operation expects."""


class RangeError(DataError):
    """An index or event lies outside the valid extent."""


class UndefinedMetricError(DataError):
    """A metric has no defined value for the given data (e.g. no positives)."""


class NumericError(WeakMilError):
    """Non-finite values in inputs or during optimisation."""

    exit_code = 4


class DivergenceError(NumericError):
    """Training loss became non-finite."""
