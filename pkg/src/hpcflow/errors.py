"""Exception types shared across the toolkit."""

from __future__ import annotations


class HpcflowError(Exception):
    """Base class for all toolkit errors."""


class ProfileError(HpcflowError):
    """Raised for unreadable or inconsistent profile/spec files."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DockerfileError(HpcflowError):
    """Raised for Dockerfile text that violates structural rules."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ReconcileError(HpcflowError):
    """Raised when image and cluster versions cannot be reconciled."""


class LaunchError(HpcflowError):
    """Raised for job requests that cannot be planned or rendered."""


class BenchLogError(HpcflowError):
    """Raised for malformed benchmark logs."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class RunnerError(HpcflowError):
    """Raised for invalid executor or mock-scheduler usage."""
