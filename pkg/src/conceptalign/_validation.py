"""Input validation helpers used across estimators and functions."""

import hashlib

import numpy as np
from sklearn.utils import check_array

from .exceptions import DataError, DimensionMismatch, LengthMismatch


def check_matrix(X, name="X", n_features=None, dtype=np.float64):
    """Return ``X`` as a finite 2-D float array, optionally of fixed width."""
    X = check_array(X, dtype=dtype, ensure_2d=True, ensure_min_samples=1,
                    ensure_all_finite=False, input_name=name)
    if not np.all(np.isfinite(X)):
        raise DataError(f"{name} contains NaN or infinite values")
    if n_features is not None and X.shape[1] != n_features:
        raise DimensionMismatch(
            f"{name} has {X.shape[1]} columns, expected {n_features}"
        )
    return X


def check_binary(X, name="X", n_features=None):
    X = check_matrix(X, name=name, n_features=n_features)
    if not np.all((X == 0) | (X == 1)):
        raise ValueError(f"{name} must contain only 0 and 1")
    return X


def check_labels(y, n_samples=None, name="y"):
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if n_samples is not None and y.shape[0] != n_samples:
        raise LengthMismatch(
            f"{name} has {y.shape[0]} entries, expected {n_samples}"
        )
    return y


def fingerprint(*arrays):
    """Stable hex digest of array contents, shapes and dtypes."""
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a)
        h.update(str(a.dtype).encode())
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()[:16]
