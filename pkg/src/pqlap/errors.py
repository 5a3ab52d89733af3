"""Exception hierarchy shared by all modules."""


class PqlapError(Exception):
    """Base class for all package errors."""


class InvalidArgument(PqlapError, ValueError):
    pass


class NumericDomainError(PqlapError, ArithmeticError):
    pass


class InvalidBasis(PqlapError, ValueError):
    pass


class SpecInconsistency(PqlapError, ValueError):
    """Declared nonlinearity limits disagree with the sampled ones."""


class HypothesisViolation(PqlapError):
    """A standing assumption on the nonlinearity fails numerically."""


class GeometryFailure(PqlapError):
    """No negative-energy endpoint was found along the search ray."""


class ConvergenceFailure(PqlapError, RuntimeError):
    """An iterative solver did not converge.

    The best iterate seen so far (and any partial results) are attached so
    callers can inspect or resume.
    """

    def __init__(self, message, best=None, partial=None, history=None):
        super().__init__(message)
        self.best = best
        self.partial = partial if partial is not None else []
        self.history = history if history is not None else []
