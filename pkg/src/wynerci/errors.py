"""Exception hierarchy shared by every module of the package."""


class WynerError(Exception):
    """Base class for all package errors."""


class InvalidSpecError(WynerError, ValueError):
    """A source/synthetic specification violates its invariants."""


class InvalidArgumentError(WynerError, ValueError):
    """An argument is malformed or inconsistent with another argument."""


class InvalidDistributionError(WynerError, ValueError):
    """A tensor is not a valid probability distribution."""


class TooLargeError(WynerError, ValueError):
    """A dense tensor would exceed the size guard."""


class ConsistencyError(WynerError, ArithmeticError):
    """Two numerically independent routes to the same quantity disagree."""


class FusionDegenerateError(WynerError, ValueError):
    """The fused precision matrix is not positive definite."""


class DomainError(WynerError, ValueError):
    """Natural parameters fall outside the family's domain."""
