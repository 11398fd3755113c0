"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
CheckpointError -> 4.
"""


class StreamAFTError(Exception):
    """Base class for all package errors."""


class ConfigError(StreamAFTError):
    """Invalid configuration (dimensions, batch size, schedule, flags)."""


class DataError(StreamAFTError):
    """Invalid or insufficient data (bad records, empty streams, degenerate sets)."""


class RecordError(DataError):
    """A single malformed input record."""

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class SequencingError(StreamAFTError):
    """Batches consumed out of order, or main/replicate lockstep broken."""


class DegenerateProblemError(DataError):
    """The batch objective carries no information (e.g. every event censored)."""


class CheckpointError(StreamAFTError):
    """Checkpoint file is corrupt, incompatible, or from another configuration."""
