"""Exception types raised by the package."""


class EmiError(Exception):
    """Base class for all package errors."""


class ArgumentError(EmiError, ValueError):
    """An argument is out of its admissible range."""


class LayoutError(ArgumentError):
    """Data length or ordering does not match the device configuration."""


class DomainError(EmiError, ValueError):
    """The integrand or kernel is outside the domain where the method converges."""


class NumericalRankError(EmiError, ArithmeticError):
    """The stacked pair (J, L) is numerically rank deficient.

    The ``diagnostics`` attribute carries the smallest/largest diagonal of the
    triangular factor and the tolerance that was applied.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class SingularComponentError(EmiError, ArithmeticError):
    """A zero generalized singular value falls inside the retained band."""


class UndefinedSensitivityError(EmiError, ArithmeticError):
    """The surface-layer sensitivity is zero, so relative thresholds are undefined."""


class InversionFailure(EmiError, RuntimeError):
    """Every starting model failed to produce a finite iterate."""

    def __init__(self, message, per_start=None):
        super().__init__(message)
        self.per_start = per_start or []
