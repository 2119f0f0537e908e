"""Error taxonomy shared across the library and the CLI.

Each class maps to one CLI exit code so scripted callers can tell parse
problems from violated preconditions, insufficient finite-model margin,
and oracle disagreement.
"""

from __future__ import annotations


class CommutantError(Exception):
    """Base class for library errors."""

    exit_code = 1


class ParseError(CommutantError):
    """Malformed input file or JSON payload."""

    exit_code = 2


class PreconditionError(CommutantError):
    """A documented precondition of an operation does not hold."""

    exit_code = 3


class MarginError(CommutantError):
    """The finite model is too small for the requested construction."""

    exit_code = 4


class OracleError(CommutantError):
    """An independent oracle failed or disagreed with the implementation."""

    exit_code = 5
