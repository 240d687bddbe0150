"""Exception types shared across the package."""


class SpadeError(Exception):
    """Base class for all package errors."""


class InvalidArgument(SpadeError, ValueError):
    pass


class DimensionError(SpadeError, ValueError):
    pass


class RankError(SpadeError, ArithmeticError):
    pass


class SingularityError(SpadeError, ArithmeticError):
    """Raised when a Fisher matrix cannot be inverted.

    ``condition`` carries the estimated condition number.
    """

    def __init__(self, message, condition=float("inf")):
        super().__init__(message)
        self.condition = condition


class QuadratureError(SpadeError, ArithmeticError):
    pass


class ConfigError(SpadeError, ValueError):
    pass
