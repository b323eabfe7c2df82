"""Exception types shared across the package.

The CLI maps these to exit codes: configuration problems exit 2,
numerical failures exit 3, and scenarios where the requested quantity
is not identifiable (or nothing was detected) exit 4.
"""


class BeamflowError(Exception):
    """Base class for all package errors."""


class ConfigurationError(BeamflowError):
    """Invalid or unsupported configuration (bad scenario file, unknown model tag)."""


class ModelValidityError(BeamflowError):
    """The statistical model violates an assumption (e.g. non-negative curvature)."""


class NumericalError(BeamflowError):
    """A numerical procedure failed to converge or produced an unusable grid."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class DomainError(ValueError, BeamflowError):
    """Arguments outside the mathematical domain (e.g. evanescent wavenumbers)."""


class NoDetectionError(BeamflowError):
    """An imaging function contained no usable peak."""


class NonIdentifiableError(BeamflowError):
    """The scenario does not determine the requested quantity (e.g. frozen medium)."""


class RangeBracketError(BeamflowError):
    """The range search interval does not bracket a solution."""
