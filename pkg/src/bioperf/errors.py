"""Shared exception types."""


class ValidationError(ValueError):
    """Input violates a documented contract (bad matrix, malformed CSV, ...)."""


class HarnessError(RuntimeError):
    """Network/runtime failure while serving or driving traffic."""
