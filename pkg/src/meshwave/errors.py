"""Exception hierarchy shared across the package.

Each class carries the process exit code the CLI maps it to, so library
code raises by failure kind and the CLI stays a thin translation layer.
"""


class MeshwaveError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class UsageError(MeshwaveError):
    """Bad invocation: unknown flags, missing arguments, malformed values."""

    exit_code = 1


class DataError(MeshwaveError):
    """Input data failed parsing or validation."""

    exit_code = 2


class MeshError(DataError):
    """Mesh-specific validation failure (non-manifold, disconnected, ...)."""


class NumericalError(MeshwaveError):
    """A numeric procedure failed: no convergence, residual too large, ..."""

    exit_code = 3
