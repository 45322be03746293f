"""Exception types shared across the package."""

from __future__ import annotations


class SingregError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(SingregError, ValueError):
    """An argument violates an operation's contract."""


class ConfigError(SingregError, ValueError):
    """An experiment configuration is malformed or inconsistent."""


class SchemaError(SingregError, ValueError):
    """A persisted artifact is missing required fields or has the wrong shape."""


class FitError(SingregError, RuntimeError):
    """A fit cannot produce a usable estimate from the data it was given."""
