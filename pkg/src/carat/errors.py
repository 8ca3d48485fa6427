"""Exception types shared across the package."""


class CaratError(Exception):
    """Base class for all package-specific errors."""


class InputError(CaratError):
    """An argument violates an operation's preconditions (shape, domain, emptiness)."""


class NumericError(CaratError):
    """Non-finite values where finite ones are required."""


class DegenerateVectorError(CaratError):
    """A vector with (near-)zero norm was passed to a normalizing operation."""


class GradCheckFailure(CaratError):
    """Analytic gradient disagrees with the finite-difference estimate."""

    def __init__(self, message, param=None, index=None, analytic=None, fd=None, rel_err=None):
        super().__init__(message)
        self.param = param
        self.index = index
        self.analytic = analytic
        self.fd = fd
        self.rel_err = rel_err


class ConfigError(CaratError):
    """Invalid or inconsistent configuration. Carries the offending field path."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class FormatError(CaratError):
    """Malformed dataset or checkpoint file. Carries the offending line/record index."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line
