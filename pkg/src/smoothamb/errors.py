"""Exception hierarchy shared by all modules."""


class SmoothAmbError(Exception):
    """Base class for library errors."""


class ParameterError(SmoothAmbError, ValueError):
    """An input parameter violates its stated invariant."""


class DomainError(SmoothAmbError, ValueError):
    """A computation left its validity domain (e.g. alpha <= alpha*)."""


class DivergentMomentError(DomainError):
    """A Gaussian exponential moment is infinite."""


class NumericalError(SmoothAmbError, ArithmeticError):
    """Quadrature, root finding or simulation failed numerically."""
