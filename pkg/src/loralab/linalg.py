"""Dense linear-algebra kernels: SVD, pseudo-inverse, operator norms, Gaussian ensembles.

Contract-checked wrappers over LAPACK (via numpy). Everything operates on
float64 arrays a few hundred entries per side at most; sparse formats and
complex arithmetic are out of scope.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .rng import ensure_generator
from .validation import check_matrix, check_positive


class SvdResult(NamedTuple):
    """Thin SVD ``m = u @ diag(singular_values) @ v.T``.

    ``u`` is m-by-k, ``v`` is n-by-k with k = min(m, n), and the singular
    values are sorted in descending order.
    """

    u: np.ndarray
    singular_values: np.ndarray
    v: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.singular_values) @ self.v.T


def svd(m) -> SvdResult:
    """Thin singular value decomposition of a dense real matrix."""
    arr = check_matrix(m, "m")
    u, s, vh = np.linalg.svd(arr, full_matrices=False)
    return SvdResult(u=u, singular_values=s, v=vh.T)


def default_rank_tol(s: np.ndarray, shape: tuple[int, int]) -> float:
    """Standard numerical-rank cutoff: max(m, n) * eps * s_max."""
    s_max = float(s[0]) if s.size else 0.0
    return max(shape) * np.finfo(np.float64).eps * s_max


def pinv(m, rank_tol: float | None = None) -> np.ndarray:
    """Moore-Penrose pseudo-inverse via SVD.

    Singular values at or below ``rank_tol`` are treated as zero; the default
    tolerance is ``max(rows, cols) * eps * s_max``.
    """
    arr = check_matrix(m, "m")
    u, s, vh = np.linalg.svd(arr, full_matrices=False)
    if rank_tol is None:
        rank_tol = default_rank_tol(s, arr.shape)
    elif rank_tol < 0:
        raise ValueError(f"rank_tol must be non-negative, got {rank_tol!r}")
    s_inv = np.where(s > rank_tol, np.divide(1.0, s, where=s > 0, out=np.zeros_like(s)), 0.0)
    return (vh.T * s_inv) @ u.T


def operator_norm(m) -> float:
    """Largest singular value (spectral norm)."""
    arr = check_matrix(m, "m")
    if not arr.any():
        return 0.0
    return float(np.linalg.svd(arr, compute_uv=False)[0])


def smallest_singular_value(m) -> float:
    """Smallest of the min(rows, cols) singular values."""
    arr = check_matrix(m, "m")
    return float(np.linalg.svd(arr, compute_uv=False)[-1])


def sample_gaussian(rng, rows: int, cols: int, scale: float) -> np.ndarray:
    """An i.i.d. N(0, scale^2) matrix, deterministic under a fixed stream."""
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be positive")
    scale = check_positive(scale, "scale")
    gen = ensure_generator(rng)
    return scale * gen.standard_normal((rows, cols))
