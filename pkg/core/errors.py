"""
Error types for the MiniHAC engine.
Every failure the library raises derives from HACError so the CLI can map it
to an exit code without inspecting messages.
"""
from typing import Optional


class HACError(Exception):
    """Base class for all engine errors.

    Attributes:
        code: Machine-readable error code
        exit_code: Process exit code the CLI uses for this error
    """

    code = "HAC_ERROR"
    exit_code = 2

    def __init__(self, message: str = ""):
        super().__init__(message)
        self.message = message

    def __str__(self) -> str:
        return f"[{self.code}] {self.message}" if self.message else f"[{self.code}]"


class InvalidInputError(HACError, ValueError):
    """Input data violates a precondition (empty set, non-finite value, ...)."""

    code = "INVALID_INPUT"


class ParseError(InvalidInputError):
    """A point file could not be parsed.

    Attributes:
        line: 1-based line number of the offending row, if known
    """

    code = "PARSE_ERROR"

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NoCandidateError(HACError, LookupError):
    """A nearest-neighbor query had no admissible item."""

    code = "NO_CANDIDATE"


class InternalInvariantViolation(HACError, RuntimeError):
    """The engine detected a broken internal invariant."""

    code = "INTERNAL_INVARIANT_VIOLATION"
    exit_code = 2


class RefusedError(HACError):
    """The request is valid but outside what the command will do (e.g. oracle size guard)."""

    code = "REFUSED"
    exit_code = 1


class VerificationFailure(HACError):
    """Two dendrograms disagree beyond tolerance."""

    code = "VERIFICATION_FAILED"
    exit_code = 3
