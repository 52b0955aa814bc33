"""Input validation helpers shared across the package.

Modeled on scikit-learn's ``check_*`` conventions: each helper either returns
a canonicalized value or raises ``ValueError`` naming the offending argument.
"""

from __future__ import annotations

import numpy as np


def check_matrix(a, name: str = "matrix") -> np.ndarray:
    """Canonicalize to a finite, non-empty 2-d float64 array."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got ndim={arr.ndim}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must have at least one row and column, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_vector(a, name: str = "vector", length: int | None = None) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got ndim={arr.ndim}")
    if length is not None and arr.shape[0] != length:
        raise ValueError(f"{name} must have length {length}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_samples(x, name: str = "X", n_features: int | None = None) -> np.ndarray:
    """Canonicalize a sample batch to (n, d); a single vector becomes (1, d)."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a vector or a 2-d batch, got ndim={arr.ndim}")
    if n_features is not None and arr.shape[1] != n_features:
        raise ValueError(f"{name} must have {n_features} features, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_positive(x, name: str) -> float:
    val = float(x)
    if not np.isfinite(val) or val <= 0.0:
        raise ValueError(f"{name} must be a positive finite real, got {x!r}")
    return val


def check_non_negative(x, name: str) -> float:
    val = float(x)
    if not np.isfinite(val) or val < 0.0:
        raise ValueError(f"{name} must be a non-negative finite real, got {x!r}")
    return val


def check_positive_int(x, name: str) -> int:
    if isinstance(x, bool) or int(x) != x:
        raise ValueError(f"{name} must be a positive integer, got {x!r}")
    val = int(x)
    if val < 1:
        raise ValueError(f"{name} must be a positive integer, got {x!r}")
    return val


def check_probability(x, name: str = "delta") -> float:
    """Failure probability in the half-open interval (0, 1]."""
    val = float(x)
    if not np.isfinite(val) or val <= 0.0 or val > 1.0:
        raise ValueError(f"{name} must lie in (0, 1], got {x!r}")
    return val


def check_unit_cube(x, name: str = "X") -> np.ndarray:
    arr = check_samples(x, name)
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError(f"{name} entries must lie in [0, 1]")
    return arr
