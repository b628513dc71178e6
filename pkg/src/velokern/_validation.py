"""Small input-validation helpers used across the package."""

import numpy as np

from .exceptions import InvalidInputError


def as_samples(x, dim=None, name="x", min_length=0):
    """Return ``x`` as a float64 array of shape ``(T, dim)``.

    One-dimensional input is read as a scalar signal (``dim == 1``).
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise InvalidInputError(
            f"{name} must be a sequence of vectors, got ndim={arr.ndim}")
    if dim is not None and arr.shape[1] != dim:
        raise InvalidInputError(
            f"{name} samples must have dimension {dim}, got {arr.shape[1]}")
    if arr.shape[0] < min_length:
        raise InvalidInputError(
            f"{name} needs at least {min_length} samples, got {arr.shape[0]}")
    return arr


def as_vector(x, size=None, name="x"):
    arr = np.asarray(x, dtype=np.float64).reshape(-1)
    if size is not None and arr.size != size:
        raise InvalidInputError(f"{name} must have {size} entries, got {arr.size}")
    return arr


def check_positive(value, name):
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise InvalidInputError(f"{name} must be a positive finite number, got {value}")
    return value


def frozen(arr):
    """Read-only copy of ``arr`` (the caller's array is left writable)."""
    arr = np.array(arr, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr
