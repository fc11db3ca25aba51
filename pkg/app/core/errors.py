"""
Exception hierarchy shared by the services, the HTTP controllers and the CLI.

Every error derives from ``ValueError`` so controllers can keep catching
``ValueError`` and turn it into a 400 response. ``exit_code`` is the process
exit status the CLI uses for the error:

    1 usage error, 2 I/O error, 3 remote-client error, 4 validation error
"""

from __future__ import annotations

from typing import Optional

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_REMOTE = 3
EXIT_VALIDATION = 4


class ToolkitError(ValueError):
    """Base class of every domain error."""
    exit_code: int = EXIT_VALIDATION


class EmptyInputError(ToolkitError):
    pass


class InvalidParamError(ToolkitError):
    pass


class UnstableFilterError(ToolkitError):
    pass


class LengthMismatchError(ToolkitError):
    pass


class InsufficientDataError(ToolkitError):
    pass


class UnknownClassError(ToolkitError):
    pass


class ParseError(ToolkitError):
    """Malformed document; carries the line or record that failed."""

    def __init__(self, message: str, line: Optional[int] = None,
                 record: Optional[str] = None):
        self.line = line
        self.record = record
        where = []
        if line is not None:
            where.append(f"line {line}")
        if record is not None:
            where.append(f"record {record!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class JudgeParseError(ToolkitError):
    pass


class ResponseEmptyError(ToolkitError):
    pass


class MediaFormatError(ToolkitError):
    exit_code = EXIT_IO


class DetectorUnavailableError(ToolkitError):
    exit_code = EXIT_REMOTE


class ClientUnavailableError(ToolkitError):
    exit_code = EXIT_REMOTE


class FixtureMissingError(ClientUnavailableError):
    """Mock client has no transcript for a request hash."""
