"""Exception hierarchy shared across the package."""


class ReservingError(Exception):
    """Base class for all errors raised by this package."""


class DataError(ReservingError, ValueError):
    """Malformed or inconsistent input data."""


class ConvergenceError(ReservingError, RuntimeError):
    """An iterative fit failed to converge."""


class DegenerateGeometryError(ReservingError, ValueError):
    """A polytope, hull or depth region is lower-dimensional or otherwise unusable."""
