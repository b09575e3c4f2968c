"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Raised when inputs violate a documented precondition or file schema."""


class NumericError(RuntimeError):
    """Raised when a numerical operation fails (singularity, loss of SPD-ness)."""


class ConvergenceError(NumericError):
    """Iterative solver did not converge; carries the last iterate and residual."""

    def __init__(self, message, last_iterate=None, residual=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual
