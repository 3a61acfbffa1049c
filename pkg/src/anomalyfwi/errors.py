"""Exception and warning types shared across the package."""


class AnomalyFwiError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(AnomalyFwiError, ValueError):
    pass


class OutOfRangeError(AnomalyFwiError, ValueError):
    pass


class DegenerateInputError(AnomalyFwiError, ValueError):
    pass


class NumericalFailure(AnomalyFwiError, ArithmeticError):
    pass


class StabilityError(AnomalyFwiError, ValueError):
    """Raised when a finite-difference run would violate a stability rule."""

    def __init__(self, rule, message):
        super().__init__(message)
        self.rule = rule


class ConfigError(AnomalyFwiError, ValueError):
    pass


class StaleModelError(AnomalyFwiError, ValueError):
    """A measurement-specific surrogate was queried against a different observation."""


class ExtrapolationWarning(UserWarning):
    pass


class DegenerateInputWarning(UserWarning):
    pass


class IllConditionedWarning(UserWarning):
    pass
