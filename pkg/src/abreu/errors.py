"""Exception hierarchy shared by all modules."""


class AbreuError(Exception):
    """Base class for every error raised by this package."""


class GridError(AbreuError, ValueError):
    pass


class GridTooCoarseError(GridError):
    """Fewer than the required number of interior nodes along some axis."""


class StencilIncompleteError(AbreuError, ValueError):
    pass


class DegenerateHessianError(AbreuError, ArithmeticError):
    pass


class NotNormalizedError(AbreuError, ValueError):
    pass


class SectionNotCompactError(AbreuError, ValueError):
    pass


class NonPositiveError(AbreuError, ValueError):
    """A field required to be positive (w, d + f, boundary data) is not."""


class ParameterRangeError(AbreuError, ValueError):
    pass


class DomainContainmentError(AbreuError, ValueError):
    pass


class SolverError(AbreuError, RuntimeError):
    """Base for solver failures; ``context`` names where it happened."""

    def __init__(self, message, **context):
        super().__init__(message)
        self.message = message
        self.context = context

    def __str__(self):
        if not self.context:
            return self.message
        extra = ", ".join(f"{k}={v!r}" for k, v in self.context.items())
        return f"{self.message} ({extra})"


class LineSearchFailed(SolverError):
    pass


class MaxIterationsError(SolverError):
    pass


class OuterIterationStalled(SolverError):
    pass


class SingularSystemError(SolverError):
    pass
