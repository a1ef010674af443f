"""
Exception hierarchy shared by every stage of the selection engine.

The CLI maps these onto exit codes: 1 for usage/configuration problems,
2 for data problems, 3 for internal invariant violations.
"""

from typing import Optional

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


class BilafError(Exception):
    """Base class for all errors raised by bilaf_engine."""

    exit_code = EXIT_INTERNAL


class ConfigurationError(BilafError, ValueError):
    """A hyperparameter or flag combination is invalid."""

    exit_code = EXIT_USAGE


class UsageError(ConfigurationError):
    """Bad or missing command-line arguments."""


class DataFormatError(BilafError, ValueError):
    """A feature file could not be parsed.

    Carries the byte offset (binary files) or 1-based line number (CSV) where
    the problem was detected.
    """

    exit_code = EXIT_DATA

    def __init__(self, message: str, *, offset: Optional[int] = None,
                 line: Optional[int] = None, path: Optional[str] = None):
        where = []
        if path is not None:
            where.append(str(path))
        if offset is not None:
            where.append(f"byte offset {offset}")
        if line is not None:
            where.append(f"line {line}")
        full = f"{message} ({', '.join(where)})" if where else message
        super().__init__(full)
        self.offset = offset
        self.line = line
        self.path = path


class PoolIOError(BilafError, OSError):
    """Reading or writing a pool/report file failed."""

    exit_code = EXIT_DATA

    def __init__(self, message: str, path):
        super().__init__(f"{message}: {path}")
        self.path = str(path)


class SeparationInfeasibleError(ConfigurationError):
    """Mixture class centers could not be placed far enough apart."""

    exit_code = EXIT_DATA


class InfeasibleBudgetError(ConfigurationError):
    """The requested budget cannot be met by the pool or the cluster layout."""

    exit_code = EXIT_DATA


class DegenerateSubsetError(BilafError, ValueError):
    """A geometric query was asked of too few points."""

    exit_code = EXIT_DATA


class InvariantViolation(BilafError, RuntimeError):
    """An internal invariant does not hold (a bug or an exhausted pool)."""

    exit_code = EXIT_INTERNAL


def exit_code_for(exc: BaseException) -> int:
    """CLI exit code for an exception raised by a subcommand."""
    if isinstance(exc, BilafError):
        return exc.exit_code
    return EXIT_INTERNAL
