"""Exception hierarchy shared by every module.

The CLI maps these onto process exit codes (2 validation, 3 convergence,
4 resource budget), so each class carries an ``exit_code`` attribute.
"""


class HaldaneIonsError(Exception):
    exit_code = 1


class InvalidConfig(HaldaneIonsError, ValueError):
    exit_code = 2


class InvalidParams(InvalidConfig):
    pass


class DimensionMismatch(InvalidConfig):
    pass


class InsufficientData(InvalidConfig):
    pass


class ResonanceError(HaldaneIonsError, ValueError):
    """Drive frequency too close to a motional mode for second-order theory."""

    exit_code = 2


class DivisionByZero(InvalidConfig, ZeroDivisionError):
    pass


class NonConvergence(HaldaneIonsError, RuntimeError):
    exit_code = 3


class ConvergenceFailure(NonConvergence):
    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class StepControlFailure(NonConvergence):
    pass


class TruncationNotConverged(NonConvergence):
    pass


class UnstableConfiguration(HaldaneIonsError, ValueError):
    exit_code = 2

    def __init__(self, message, axis=None):
        super().__init__(message)
        self.axis = axis


class DimensionBudgetExceeded(HaldaneIonsError, MemoryError):
    exit_code = 4
