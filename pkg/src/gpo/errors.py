class GpoError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(GpoError, ValueError):
    pass


class EmptyWindowError(GpoError, ValueError):
    """A sensor stream has no samples inside the preintegration window."""


class SingularSystemError(GpoError, ArithmeticError):
    """Normal equations or a prior covariance are (numerically) singular."""


class ConvergenceError(GpoError, RuntimeError):
    def __init__(self, message, iterations=None, residual_norm=None, trace=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual_norm = residual_norm
        self.trace = trace


class OracleSelfCheckError(GpoError, RuntimeError):
    """Step halving changed the oracle output beyond tolerance."""


class WindowMismatchError(GpoError, ValueError):
    pass


class DepthError(GpoError, ValueError):
    """Landmark at non-positive depth in the camera frame."""
