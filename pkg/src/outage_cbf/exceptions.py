"""Exception types raised by the solver stack."""


class OutageCBFError(Exception):
    """Base class for package errors."""


class DomainError(OutageCBFError, ValueError):
    """A function was evaluated outside its mathematical domain."""


class NumericFailure(OutageCBFError, ArithmeticError):
    """A root finder or factorization could not produce a trustworthy number."""


class InfeasibleAnchorError(OutageCBFError, ValueError):
    """The linearization point has a link trace below the interference floor."""


class InfeasibleStartError(OutageCBFError, ValueError):
    """No strictly feasible point could be built for the barrier method."""
