"""Dense linear algebra and random sampling helpers.

Everything is float64 and uses the row-vector convention: a weight row
``w`` solving the normal equations satisfies ``w @ A == b``.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, NotPositiveDefinite

Rng = np.random.Generator


def make_rng(seed: int | np.random.SeedSequence) -> Rng:
    """PCG64 generator; the same seed always yields the same stream."""
    return np.random.Generator(np.random.PCG64(seed))


def symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def spd_solve_right(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Return ``X = B @ inv(A)`` for symmetric positive definite ``A``.

    Solved through a Cholesky factorization of ``A`` (``A`` is symmetrized
    first); the inverse is never formed. ``b`` may be a vector, in which case
    a vector is returned.

    Raises:
        NotPositiveDefinite: if the factorization meets a pivot <= 0.
        DimensionMismatch: if shapes are incompatible.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"A must be square, got shape {a.shape}")
    squeeze = b.ndim == 1
    b2 = b[None, :] if squeeze else b
    if b2.ndim != 2 or b2.shape[1] != a.shape[0]:
        raise DimensionMismatch(f"B has shape {b.shape}, expected (*, {a.shape[0]})")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b2))):
        raise NotPositiveDefinite("non-finite entries in normal equations")
    try:
        factor = scipy.linalg.cho_factor(symmetrize(a), lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    # X A = B  <=>  A X^T = B^T  (A symmetric)
    x = scipy.linalg.cho_solve(factor, b2.T, check_finite=False).T
    return x[0] if squeeze else x


def clip_box(v: np.ndarray, low: np.ndarray, high: np.ndarray) -> np.ndarray:
    """Elementwise ``min(high, max(low, v))``; works row-wise on batches too."""
    v = np.asarray(v, dtype=np.float64)
    low = np.asarray(low, dtype=np.float64)
    high = np.asarray(high, dtype=np.float64)
    if low.shape != high.shape or v.shape[-1:] != low.shape[-1:]:
        raise DimensionMismatch(
            f"clip_box shapes differ: v{v.shape} low{low.shape} high{high.shape}"
        )
    return np.minimum(high, np.maximum(low, v))


def gaussian_vector(rng: Rng, dim: int, sigma: float) -> np.ndarray:
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    # always consume the stream so sigma does not shift later draws
    return sigma * rng.standard_normal(dim) + 0.0
