"""Shared error hierarchy. The CLI maps these classes onto exit codes."""


class FollowshiftError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(FollowshiftError):
    """Bad invocation, flags, or configuration values (exit code 1)."""


class DataError(FollowshiftError):
    """Malformed or inconsistent input data (exit code 2)."""


class InvariantError(FollowshiftError):
    """An internal consistency check failed; indicates a bug (exit code 3)."""
