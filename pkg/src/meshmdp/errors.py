"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """Argument has the wrong shape, range or type."""


class DomainError(ValueError):
    """A point lies outside the support of a density."""


class NumericError(ArithmeticError):
    """A computation failed to converge or produced a non-finite result."""


class AccuracyError(NumericError):
    """A discretization error estimate exceeded the requested tolerance."""
