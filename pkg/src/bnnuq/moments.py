"""Closed-form moments of a rectified Gaussian.

For ``a ~ N(mean, variance)`` and ``psi(a) = max(0, a)`` these give the exact
mean, variance and second moment of ``psi(a)``. With ``r = mean/std``:

    E[psi(a)]   = mean * Phi(r) + std * N(r)
    Var[psi(a)] = variance * alpha(r)

where ``h(r) = N(r) + r*Phi(r)`` and ``alpha(r) = Phi(r) + r*h(r) - h(r)^2``.
``N``/``Phi`` are the standard normal pdf/cdf. The degenerate case
``variance = 0`` is handled exactly (point mass at ``mean``), not floored.

All functions are vectorised over numpy arrays and computed in float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class GaussianMoments:
    """A (mean, variance) pair; variance must be finite and >= 0.

    ``mean``/``variance`` may be scalars or arrays of matching shape.
    """

    mean: np.ndarray | float
    variance: np.ndarray | float

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        var = np.asarray(self.variance, dtype=float)
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(var))):
            raise ValueError("moments must be finite")
        if np.any(var < 0):
            raise ValueError("variance must be non-negative")

    @property
    def std(self) -> np.ndarray | float:
        return np.sqrt(self.variance)


def std_normal_pdf(r):
    """Standard normal density N(r)."""
    r = np.asarray(r, dtype=float)
    out = _INV_SQRT_2PI * np.exp(-0.5 * r * r)
    return out if out.ndim else float(out)


def std_normal_cdf(r):
    """Standard normal cdf Phi(r), erf-based, |error| < 1e-12."""
    r = np.asarray(r, dtype=float)
    out = ndtr(r)
    return out if out.ndim else float(out)


def _split_degenerate(mean, variance):
    mean = np.asarray(mean, dtype=float)
    variance = np.asarray(variance, dtype=float)
    if np.any(variance < 0):
        raise ValueError("variance must be non-negative")
    mean, variance = np.broadcast_arrays(mean, variance)
    positive = variance > 0
    std = np.sqrt(variance, where=positive, out=np.zeros_like(variance))
    # r is only consumed where positive; the fill value avoids 0/0 warnings.
    # Phi and N saturate far before |r| = 50, so clamping loses nothing and
    # keeps downstream r*r products finite.
    r = np.divide(mean, std, where=positive, out=np.zeros_like(std))
    r = np.clip(r, -50.0, 50.0)
    return mean, variance, std, r, positive


def relu_gaussian_mean(mean, variance):
    """E[psi(a)] for a ~ N(mean, variance)."""
    mean, variance, std, r, positive = _split_degenerate(mean, variance)
    out = np.where(positive,
                   mean * ndtr(r) + std * std_normal_pdf(r),
                   np.maximum(mean, 0.0))
    return out if out.ndim else float(out)


def relu_gaussian_var(mean, variance):
    """Var[psi(a)] for a ~ N(mean, variance); always in [0, variance]."""
    mean, variance, std, r, positive = _split_degenerate(mean, variance)
    phi_r = ndtr(r)
    h = std_normal_pdf(r) + r * phi_r
    alpha = np.clip(phi_r + r * h - h * h, 0.0, 1.0)
    out = np.where(positive, variance * alpha, 0.0)
    return out if out.ndim else float(out)


def relu_gaussian_second_moment(mean, variance):
    """E[psi(a)^2]; equals Var[psi(a)] + E[psi(a)]^2 by construction."""
    mean = np.asarray(mean, dtype=float)
    m1 = relu_gaussian_mean(mean, variance)
    out = relu_gaussian_var(mean, variance) + np.square(m1)
    out = np.asarray(out)
    return out if out.ndim else float(out)
