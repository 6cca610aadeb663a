"""Shared exception types.

Raised conditions map onto the command-line exit codes: configuration
problems exit with 2, accuracy failures (integration, quadrature, grid
overflow) with 3, and comparison failures with 4.
"""


class WidewellError(Exception):
    """Base class for package errors."""


class ConfigError(WidewellError):
    """A scenario configuration is missing keys or holds invalid values."""


class IntegrationAccuracy(WidewellError):
    """A time integration failed its accuracy check (energy drift, det S)."""


class StepAccuracy(WidewellError):
    """A propagation step violated its per-step conservation tolerance."""


class QuadratureAccuracy(WidewellError):
    """A quadrature did not stabilize to the requested tolerance."""


class GridOverflow(WidewellError):
    """State support reached the edge of a spatial or momentum grid."""


class WindowError(WidewellError):
    """A requested evaluation window lies outside the available grid."""


class ComparisonMismatch(WidewellError):
    """Two artifact sets cannot be compared (different scenario hashes)."""
