"""Input checks shared by the estimator-style classes."""

import numpy as np
from sklearn.utils.validation import check_array, check_consistent_length

from .exceptions import InsufficientData, InvalidParams


def check_xy_1d(X, y, min_samples=2):
    x = check_array(np.asarray(X, dtype=float).reshape(-1, 1), ensure_min_samples=1).ravel()
    y = check_array(np.asarray(y, dtype=float).reshape(-1, 1), ensure_min_samples=1).ravel()
    check_consistent_length(x, y)
    if x.size < min_samples:
        raise InsufficientData(f"need at least {min_samples} samples, got {x.size}")
    return x, y


def check_positive_1d(x, name):
    if np.any(np.asarray(x) <= 0):
        raise InvalidParams(f"{name} must be strictly positive")


def check_state(psi, n_sites=None):
    """Return a complex 1-D state and its site count; rejects non-3^N sizes."""
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    n = int(round(np.log(psi.size) / np.log(3))) if psi.size > 1 else 0
    if 3**n != psi.size:
        raise InvalidParams(f"state length {psi.size} is not a power of 3")
    if n_sites is not None and n != n_sites:
        raise InvalidParams(f"state has {n} sites, expected {n_sites}")
    return psi, n
