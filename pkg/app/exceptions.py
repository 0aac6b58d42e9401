"""Exception hierarchy shared by services, repositories and the command layer.

Every error carries an ``exit_code`` that the command layer maps to the
process exit status (1 = validation error, 2 = runtime error).
"""
from typing import Optional

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


class ScenarioScoutError(Exception):
    """Base class for all domain errors."""

    exit_code: int = EXIT_RUNTIME

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


# ---------------------------------------------------------------------------
# Validation errors (exit code 1)
# ---------------------------------------------------------------------------
class ValidationFailure(ScenarioScoutError, ValueError):
    """Input rejected before any work was done."""

    exit_code = EXIT_VALIDATION


class InvalidConfig(ValidationFailure):
    """A scenario or schema violates its bounds or structure."""


class ParseError(ValidationFailure):
    """A scenario document could not be read; ``key`` names the offending field."""

    def __init__(self, detail: str, key: Optional[str] = None):
        super().__init__(detail)
        self.key = key


class FormatError(ValidationFailure):
    """A serialized artifact (model file, log line) is malformed."""


class DimensionMismatch(ValidationFailure):
    """Vector widths disagree."""


class DegenerateData(ValidationFailure):
    """Training data holds a single class."""


class InsufficientData(ValidationFailure):
    pass


class InvalidK(ValidationFailure):
    pass


class EmptyInput(ValidationFailure):
    pass


class SampleTooSmall(ValidationFailure):
    pass


class EmptySeedSet(ValidationFailure):
    """No failing training scenarios to seed the search from."""


# ---------------------------------------------------------------------------
# Runtime errors (exit code 2)
# ---------------------------------------------------------------------------
class StorageError(ScenarioScoutError):
    """Reading or writing an artifact failed; ``path`` names the file."""

    def __init__(self, detail: str, path: Optional[str] = None):
        super().__init__(detail)
        self.path = path


class CommandError(ScenarioScoutError):
    """Usage error raised by the command layer."""

    def __init__(self, detail: str, exit_code: int = EXIT_VALIDATION):
        super().__init__(detail)
        self.exit_code = exit_code
