"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """Raised when a caller violates a documented precondition."""


class NonConvergenceError(RuntimeError):
    """An iterative method hit its iteration cap or broke down.

    Attributes
    ----------
    residual : float
        Residual norm at the last iterate.
    history : list
        Per-iteration records (solver dependent), possibly empty.
    """

    def __init__(self, message, residual=float("nan"), history=None):
        super().__init__(message)
        self.residual = residual
        self.history = list(history or [])


class StagnationError(NonConvergenceError):
    """A line search could not find an acceptable step."""


class SingularMatrixError(ArithmeticError):
    """Matrix is singular to working precision."""


class ConfigError(ValueError):
    """Invalid run configuration; message names the offending key or line."""
