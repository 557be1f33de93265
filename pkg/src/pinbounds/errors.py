"""Exception hierarchy shared by all modules."""


class PinboundsError(Exception):
    """Base class for library errors."""


class DomainError(PinboundsError, ValueError):
    """An argument lies outside the domain of the operation."""


class UnrepresentableKernelError(PinboundsError):
    """A tilted kernel was requested for an exponent where c(gamma) diverges."""


class NumericalFailure(PinboundsError, ArithmeticError):
    """Quadrature or summation failed to reach its accuracy target."""


class IndeterminateError(PinboundsError):
    """Error bounds are too loose to decide a sign.

    ``interval`` carries the enclosing interval of the undecided quantity.
    """

    def __init__(self, message, interval=None):
        super().__init__(message)
        self.interval = interval


class PreconditionError(PinboundsError):
    """A documented hypothesis of the operation does not hold."""


class ConfigError(PinboundsError):
    """Invalid run configuration."""
