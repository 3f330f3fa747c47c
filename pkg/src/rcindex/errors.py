"""Exception hierarchy. The CLI maps each class to an exit code."""


class RCIndexError(Exception):
    """Base class for all errors raised by rcindex."""

    exit_code = 1


class ValidationError(RCIndexError, ValueError):
    """Bad input: malformed files, inconsistent shapes, invalid parameters."""

    exit_code = 1


class NumericalError(RCIndexError, ArithmeticError):
    """A computation cannot proceed (singularity, Heywood case, divergence)."""

    exit_code = 2


class SingularMatrixError(NumericalError):
    def __init__(self, message, smallest_eigenvalue=None):
        super().__init__(message)
        self.smallest_eigenvalue = smallest_eigenvalue


class HeywoodError(NumericalError):
    def __init__(self, variable, communality):
        super().__init__(
            f"Heywood case: communality of {variable!r} reached {communality:.6g} > 1"
        )
        self.variable = variable
        self.communality = communality
