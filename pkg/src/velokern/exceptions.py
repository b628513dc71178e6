"""Exception hierarchy shared by all modules."""


class VelokernError(Exception):
    """Base class for all library errors."""


class InvalidInputError(VelokernError, ValueError):
    """Raised when arguments have the wrong shape, length or value."""


class PreconditionError(InvalidInputError):
    """Raised when a mathematical precondition (e.g. ``f(0) = 0``) fails."""


class UnsupportedLagError(InvalidInputError):
    """Raised when the lag structure cannot be handled by the explicit path."""


class SizeOverflowError(VelokernError):
    """Raised when a dense oracle matrix would exceed the element cap."""

    def __init__(self, n_elements, cap):
        super().__init__(
            f"dense matrix would have {n_elements} elements (cap {cap})")
        self.n_elements = n_elements
        self.cap = cap


class SimulationDivergedError(VelokernError):
    """Raised when a simulated signal becomes non-finite."""

    def __init__(self, index, message=None):
        super().__init__(message or f"simulation diverged at index {index}")
        self.index = index


class NumericalError(VelokernError):
    """Raised when a factorization fails; ``pivot`` is 1-based, as in LAPACK."""

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class ConfigError(VelokernError):
    """Raised for unreadable or inconsistent experiment configuration."""


class DataError(VelokernError):
    """Raised for malformed trajectory or model files."""
