"""Dense symmetric-positive-definite solves with a fixed jitter ladder."""

from __future__ import annotations

import numpy as np
import scipy.linalg

JITTER_START = 1e-10
JITTER_MAX = 1e-4


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Raised when a matrix stays indefinite after the maximum jitter."""


def cholesky_factor(a: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``a``, adding diagonal jitter on failure.

    The jitter starts at 1e-10 and doubles up to 1e-4; the ladder is fixed
    so repeated runs factor identically. Returns ``(L, jitter_used)``.
    """
    a = np.asarray(a, dtype=float)
    jitter = 0.0
    eye = np.eye(a.shape[0])
    while True:
        try:
            return scipy.linalg.cholesky(a + jitter * eye, lower=True), jitter
        except scipy.linalg.LinAlgError:
            if jitter >= JITTER_MAX:
                raise NotPositiveDefiniteError(
                    f"matrix not positive definite (max jitter {JITTER_MAX:g})"
                ) from None
            jitter = JITTER_START if jitter == 0.0 else 2.0 * jitter


def cholesky_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``a @ x = b`` for symmetric positive-definite ``a``."""
    lower, _ = cholesky_factor(a)
    return solve_from_factor(lower, b)


def solve_from_factor(lower: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve with a precomputed lower Cholesky factor."""
    b = np.asarray(b, dtype=float)
    y = scipy.linalg.solve_triangular(lower, b, lower=True)
    return scipy.linalg.solve_triangular(lower.T, y, lower=False)
