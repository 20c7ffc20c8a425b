"""Exception hierarchy. Each class carries the CLI exit code for its error class."""


class IterBiasError(Exception):
    exit_code = 1


class ConfigError(IterBiasError):
    """Invalid configuration value; ``field`` is the dotted path of the offender."""

    exit_code = 5

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class ConfigSyntaxError(ConfigError):
    exit_code = 3


class UnknownKeyError(ConfigError):
    exit_code = 4


class CrossFieldError(ConfigError):
    exit_code = 6


class DomainError(IterBiasError, ValueError):
    exit_code = 11


class DegeneratePolicyError(IterBiasError, ValueError):
    exit_code = 11


class NumericalDegeneracyError(IterBiasError, ArithmeticError):
    """Posterior mass underflowed to zero for every hypothesis."""

    exit_code = 8

    def __init__(self, index, message="posterior underflow"):
        self.index = index
        super().__init__(f"{message} at observation {index}")


class SizeGuardError(IterBiasError):
    exit_code = 7


class ConvergenceError(IterBiasError):
    exit_code = 9

    def __init__(self, message, residual, iterations):
        self.residual = residual
        self.iterations = iterations
        super().__init__(f"{message} (residual={residual:.3e} after {iterations} iterations)")


class OutputFileError(IterBiasError):
    exit_code = 10
