"""Exception hierarchy.

Each class carries the CLI exit code it maps to, so the command layer can
translate failures without a lookup table.
"""


class PartialCovError(Exception):
    exit_code = 1


class ConfigurationError(PartialCovError, ValueError):
    exit_code = 3


class DomainError(PartialCovError, ValueError):
    exit_code = 3


class ParseError(PartialCovError, ValueError):
    exit_code = 2


class SingularMatrixError(PartialCovError, ArithmeticError):
    exit_code = 2

    def __init__(self, message, iteration=None):
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)
        self.iteration = iteration


class StabilityError(PartialCovError, ValueError):
    """Reflection coefficient on or outside the unit circle."""
    exit_code = 3


class DegenerateInputError(SingularMatrixError):
    pass


class BudgetError(PartialCovError):
    exit_code = 4


class CalibrationError(PartialCovError):
    exit_code = 1
