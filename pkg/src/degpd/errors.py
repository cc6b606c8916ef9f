"""Exception types shared across the package.

The CLI maps these onto exit codes: numerical/fit failures exit 1,
usage/data/configuration problems exit 2.
"""


class DegpdError(Exception):
    exit_code = 1


class DomainError(DegpdError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""

    exit_code = 2


class UsageError(DegpdError, ValueError):
    exit_code = 2


class ConfigurationError(DegpdError, ValueError):
    exit_code = 2


class DataError(DegpdError, ValueError):
    exit_code = 2


class NumericalError(DegpdError, ArithmeticError):
    exit_code = 1


class FitError(DegpdError, RuntimeError):
    exit_code = 1


class UnavailableError(DegpdError):
    """A quantity cannot be computed for this fit (singular Hessian, degenerate binning...)."""

    exit_code = 1


class StudyError(DegpdError, RuntimeError):
    """Too many replicate failures; ``partial`` holds the incomplete result."""

    exit_code = 1

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial
