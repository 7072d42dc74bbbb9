"""
Error hierarchy for the lab.

Every error raised on purpose derives from LabError so the CLI can map
it to an exit status. Each class also derives from the builtin the rest
of Python would expect (ValueError, RuntimeError).
"""

from typing import List, Optional, Sequence


class LabError(Exception):
    """Base class for all lab errors."""

    exit_code: int = 1


class RejectedInputError(LabError, ValueError):
    """An operation received arrays of the wrong shape or length."""


class RejectedStateError(LabError, RuntimeError):
    """Stale cache, misaligned gradient tape, or non-finite parameters."""


class ConfigurationError(LabError, ValueError):
    """Invalid experiment configuration. `keys` names the offending key path(s)."""

    exit_code = 2

    def __init__(self, message: str, keys: Optional[Sequence[str]] = None):
        self.keys: List[str] = list(keys or [])
        prefix = f"[{', '.join(self.keys)}] " if self.keys else ""
        super().__init__(f"{prefix}{message}")


class DatasetParseError(LabError, ValueError):
    """A dataset file could not be parsed. `field` names the offending field."""

    exit_code = 3

    def __init__(self, message: str, field: str, row: Optional[int] = None, path: Optional[str] = None):
        self.field = field
        self.row = row
        self.path = path
        where = f" (row {row})" if row is not None else ""
        source = f"{path}: " if path else ""
        super().__init__(f"{source}{field}{where}: {message}")


class BadMagicError(DatasetParseError):
    """IDX magic number did not match."""


class TruncatedFileError(DatasetParseError):
    """File ended before the declared payload."""


class CountMismatchError(DatasetParseError):
    """Image and label files disagree on the item count."""


class RowWidthError(DatasetParseError):
    """A text row has the wrong number of columns."""


class UnknownLabelError(DatasetParseError):
    """A label token is outside the known label set."""


class MetricsWriteError(LabError):
    """Metrics, features or checkpoint output could not be written."""

    exit_code = 4

    def __init__(self, message: str, path: str):
        self.path = path
        super().__init__(f"{path}: {message}")
