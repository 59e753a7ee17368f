"""Exception types shared across the package."""


class InvalidArgument(ValueError):
    """A precondition on an argument was violated."""


class NumericalFailure(RuntimeError):
    """An iterative or limiting procedure failed to converge.

    ``last`` carries the last iterate (or partial result) when one exists.
    """

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


class BlowUp(NumericalFailure):
    """Time stepping produced non-finite values or exceeded the norm ceiling."""
