"""Exception hierarchy.

Validation problems derive from ``ValueError`` and map to CLI exit code 2.
Resource guards map to exit code 3.
"""


class GridError(ValueError):
    """Invalid grid construction or parameter."""


class PartitionGap(GridError):
    """Children of a cell do not tile it exactly."""


class RatioViolation(GridError):
    """A child/parent measure ratio falls outside (0, 1)."""


class ParameterError(ValueError):
    """Invalid numeric parameters (Besov triple, modes, intervals)."""


class NotExact(ArithmeticError):
    """Raised when a quantity cannot be kept in exact form."""


class GuardError(RuntimeError):
    """A configured resource limit would be exceeded."""


class DepthLimitExceeded(GuardError):
    pass


class EnumerationGuard(GuardError):
    pass


class SelectionInfeasible(GuardError):
    """No admissible exotic selection within the configured limits."""

    def __init__(self, message: str, required_depth: int | None = None):
        super().__init__(message)
        self.required_depth = required_depth
