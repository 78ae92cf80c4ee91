"""Exception types shared across the package."""


class SkbootError(Exception):
    """Base class for all package errors."""


class InvalidMoment(SkbootError, ValueError):
    """Moment values outside the validity region of a distribution family."""


class LayoutMismatch(SkbootError, ValueError):
    """Moment blocks or vectors inconsistent with the declared block layout."""


class DegenerateSample(SkbootError):
    """A sample whose standard deviation is zero where a positive one is required."""


class SingularCovariance(SkbootError):
    """Sample covariance of the moment cloud is not positive definite."""


class NoConvergence(SkbootError):
    """Design-space refinement did not terminate within the iteration cap."""


class ValidityStarvation(SkbootError):
    """Almost all candidate design points violate the moment validity box."""


class NumericalFailure(SkbootError):
    """Linear algebra failed even after jitter escalation."""


class FitFailure(SkbootError):
    """Every hyperparameter search start failed."""


class SingularTraffic(SkbootError):
    """Traffic equations are singular (routing has an absorbing cycle)."""


class InsufficientB(SkbootError, ValueError):
    """Too few bootstrap samples for the requested percentile ranks."""


class UndefinedStarvation(SkbootError):
    """Too many consecutive bootstrap moments implied an undefined system."""


class ConfigError(SkbootError, ValueError):
    """Experiment configuration file is missing, malformed, or inconsistent."""
