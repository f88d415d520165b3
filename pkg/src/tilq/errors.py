"""Exception types raised by the solvers and the Monte-Carlo checks."""


class TilqError(Exception):
    """Base class for all package errors."""


class ValidationError(TilqError):
    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations)
        super().__init__(f"{len(self.violations)} violation(s): {lines}")


class UnsupportedSpec(TilqError):
    """The reduction to (M1, Mtilde, J1) is undefined for this spec."""


class SolverError(TilqError):
    """A backward ODE solve had to be aborted at time ``s``."""

    def __init__(self, message, s=None, matrix=None):
        self.s = s
        self.matrix = matrix
        if s is not None:
            message = f"{message} (s={s:.17g})"
        super().__init__(message)


class SingularLinearSystem(SolverError):
    pass


class NonPositive(SolverError):
    pass


class DivisionByZero(SolverError):
    pass


class BoundViolation(SolverError):
    pass


class NotPSD(TilqError):
    pass


class InvalidPath(TilqError):
    pass
