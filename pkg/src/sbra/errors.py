"""Exception types shared across the package."""


class SbraError(Exception):
    """Base class for all library-specific failures."""


class ParameterError(SbraError, ValueError):
    """Invalid argument values or mismatched dimensions."""


class SingularDenominatorError(SbraError):
    """The denominator polynomial vanishes at an experimental-design point."""

    def __init__(self, point_index: int, message: str | None = None):
        self.point_index = point_index
        super().__init__(
            message or f"denominator polynomial is zero at data point {point_index}"
        )


class DegenerateSystemError(SbraError):
    """A system or sample set carries no usable information (all-zero matrix,
    zero-variance responses, zero vector where a direction is required)."""


class AllPrunedError(SbraError):
    """Pruning would remove every term of a polynomial; lower the threshold."""


class NumericalError(SbraError):
    """Non-finite values or a linear solve that failed beyond recovery."""
