"""Exception hierarchy for PointFormer.

Every error raised by the library derives from :class:`PointFormerError` and
carries the process exit code the CLI reports for it.
"""

from __future__ import annotations

EXIT_OK = 0
EXIT_USER = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


class PointFormerError(Exception):
    """Base class for all PointFormer errors."""

    exit_code: int = EXIT_USER


# ---------------------------------------------------------------------------
# Argument / configuration errors
# ---------------------------------------------------------------------------


class InvalidInputError(PointFormerError):
    """Raised when input data violates a domain invariant (e.g. non-finite coordinates)."""

    exit_code = EXIT_DATA


class InvalidArgumentError(PointFormerError):
    """Raised when an argument is outside its permitted range."""


class RangeError(InvalidArgumentError):
    """Raised when an integer does not fit the declared bit width."""


class ShapeError(PointFormerError):
    """Raised when tensor shapes do not conform for an operation."""

    exit_code = EXIT_INTERNAL


class ConfigError(PointFormerError):
    """Raised for unknown keys, conflicting switches or inconsistent widths."""


# ---------------------------------------------------------------------------
# Data / format errors
# ---------------------------------------------------------------------------


class ParseError(PointFormerError):
    """Raised when a text file cannot be parsed; ``line`` is 1-based."""

    exit_code = EXIT_DATA

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class FormatError(PointFormerError):
    """Raised when a binary container is malformed."""

    exit_code = EXIT_DATA


class BadMagicError(FormatError):
    """The file does not start with the expected magic bytes."""


class VersionMismatchError(FormatError):
    """The file declares a format version this build cannot read."""


class TruncatedError(FormatError):
    """The file ends before the extent its header declares."""


class DuplicateNameError(FormatError):
    """Two tensors share a name."""


class OverlapError(FormatError):
    """Tensor payload extents overlap or are out of order."""


class SizeMismatchError(FormatError):
    """A declared tensor size disagrees with the payload extent."""


class UnknownDTypeError(FormatError):
    """A tensor entry carries an unsupported dtype tag."""


class InvariantError(PointFormerError):
    """Raised when an internal invariant is violated (a bug, not bad input)."""

    exit_code = EXIT_INTERNAL
