"""Exception types shared across the package."""


class FracsepError(Exception):
    """Base class for all package errors."""


class DomainError(FracsepError):
    """Input lies outside the mathematical domain (e.g. a gamma pole)."""


class PrecisionError(FracsepError):
    """The working scheme cannot certify the requested accuracy.

    Raised instead of returning a silently wrong value.
    """


class ConditioningError(FracsepError):
    """A least-squares system is too ill-conditioned to classify."""


class CapabilityError(FracsepError):
    """A structurally valid request is outside the implemented regime."""


class StructuralError(FracsepError):
    """A consistency check between pipeline stages failed."""


class RegimeError(FracsepError):
    """Constants or branch selection do not match the fractional orders."""
