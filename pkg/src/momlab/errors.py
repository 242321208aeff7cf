"""Exception hierarchy shared by every momlab module."""


class MomlabError(Exception):
    """Base class for all errors raised by momlab."""


class DomainError(MomlabError, ValueError):
    """An argument lies outside the domain where an operation is defined."""


class RangeError(MomlabError, ArithmeticError):
    """A numerical result overflowed or is not finite."""


class ParameterError(MomlabError, ValueError):
    """A scalar parameter is outside its admissible range."""


class PreconditionError(MomlabError, ValueError):
    """A documented precondition of an operation does not hold."""


class NormalizationError(MomlabError, ArithmeticError):
    """A Gibbs weight has zero or infinite mass."""


class UnsupportedDimensionError(MomlabError, NotImplementedError):
    """The operation is only implemented in a lower dimension."""


class ConcavityError(PreconditionError):
    """A function required to be concave is not.

    Attributes
    ----------
    node : tuple of int
        Grid index of the worst violation.
    violation : float
        Size of the positive second difference found there.
    delta0 : float or None
        Largest admissible perturbation size, when one was searched for.
    """

    def __init__(self, message, node=None, violation=None, delta0=None):
        super().__init__(message)
        self.node = node
        self.violation = violation
        self.delta0 = delta0


class ClassMembershipError(PreconditionError):
    """A potential does not belong to the curvature class it was declared in."""


class DegenerateTargetError(PreconditionError):
    """The target measure has no moment-measure representation (Theta = 0)."""


class NonConvergenceError(MomlabError, RuntimeError):
    """An iterative solver diverged; ``trace`` holds the residual history."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])
