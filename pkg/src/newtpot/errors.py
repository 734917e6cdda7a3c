"""Exception types shared across the library."""


class NewtpotError(Exception):
    """Base class for all library errors."""


class GeometryError(NewtpotError):
    """Degenerate or invalid geometry (collinear vertices, bad curvature, ...)."""


class MeshFormatError(NewtpotError):
    """Malformed mesh file or inconsistent mesh topology."""


class OnBoundaryError(NewtpotError):
    """Target point lies on (or indistinguishably close to) an element boundary."""


class SolveError(NewtpotError):
    """Linear solver failure (non-convergent SVD, singular factorization)."""


class ConvergenceError(NewtpotError):
    """Adaptive integration failed to reach the requested tolerance.

    Carries the best available estimate so callers can decide whether to
    accept it anyway.
    """

    def __init__(self, message, best_estimate=None, error_estimate=None):
        super().__init__(message)
        self.best_estimate = best_estimate
        self.error_estimate = error_estimate
