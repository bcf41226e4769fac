"""Exception types shared across the package."""


class InvalidParameter(ValueError):
    """A value is outside the domain an operation accepts."""


class ClockRegression(InvalidParameter):
    """A node was asked to move backwards in simulated time."""


class InvalidState(RuntimeError):
    """An object is missing data required by the requested operation."""


class NumericFailure(ArithmeticError):
    """An iterative solver did not reach its tolerance."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual
