"""Exception types shared across the package."""


class DomainError(ValueError):
    """An input violates a documented precondition."""


class DegenerateGeometryError(DomainError):
    """Coincident points or a rank-deficient array manifold."""


class UnsensableTargetError(DomainError):
    """The target direction lies inside the clutter subspace."""


class NumericError(ArithmeticError):
    """A numerical routine failed on otherwise valid input."""


class TrainingFailure(RuntimeError):
    """Unfolded-network training diverged."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])
