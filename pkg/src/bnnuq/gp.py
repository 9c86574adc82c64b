"""Infinite-width ReLU network kernel and exact GP regression.

The kernel is the arccos recursion for a fully-connected ReLU network with
independent N(0, sigma_w^2 / fan_in) weight and N(0, sigma_b^2) bias priors,
applied once per hidden layer:

    K0(x, z)    = sigma_b^2 + sigma_w^2 * <x, z> / D
    K_{l+1}(x, z) = sigma_b^2 + sigma_w^2 / (2 pi) * sqrt(K_l(x,x) K_l(z,z))
                    * (sin t + (pi - t) cos t),  t = arccos of the correlation

with the correlation clamped to [-1, 1] at the boundary. The bias term
enters at every layer including the readout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import cholesky_factor, solve_from_factor
from .moments import GaussianMoments

VAR_CLAMP_TOL = -1e-10


@dataclass(frozen=True)
class NngpKernelConfig:
    depth: int
    sigma_w: float
    sigma_b: float
    input_dim: int

    def __post_init__(self):
        if self.depth < 1 or self.input_dim < 1:
            raise ValueError("depth and input dim must be >= 1")
        if self.sigma_w <= 0 or self.sigma_b <= 0:
            raise ValueError("kernel scales must be positive")


def _arccos_step(k_cross, k_diag_a, k_diag_b, sw2, sb2):
    denom = np.sqrt(np.outer(k_diag_a, k_diag_b))
    corr = np.clip(k_cross / denom, -1.0, 1.0)
    theta = np.arccos(corr)
    return sb2 + sw2 / (2.0 * np.pi) * denom \
        * (np.sin(theta) + (np.pi - theta) * np.cos(theta))


def nngp_gram(cfg: NngpKernelConfig, x: np.ndarray,
              z: np.ndarray | None = None) -> np.ndarray:
    """Kernel matrix K[i, j] = k(x_i, z_j); z defaults to x."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    z = x if z is None else np.atleast_2d(np.asarray(z, dtype=float))
    sw2, sb2 = cfg.sigma_w ** 2, cfg.sigma_b ** 2
    k_cross = sb2 + sw2 * (x @ z.T) / cfg.input_dim
    k_x = sb2 + sw2 * np.sum(np.square(x), axis=1) / cfg.input_dim
    k_z = sb2 + sw2 * np.sum(np.square(z), axis=1) / cfg.input_dim
    for _ in range(cfg.depth):
        k_cross = _arccos_step(k_cross, k_x, k_z, sw2, sb2)
        k_x = sb2 + 0.5 * sw2 * k_x
        k_z = sb2 + 0.5 * sw2 * k_z
    return k_cross


def nngp_diag(cfg: NngpKernelConfig, x: np.ndarray) -> np.ndarray:
    """Prior variance k(x, x) per row of x."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    sw2, sb2 = cfg.sigma_w ** 2, cfg.sigma_b ** 2
    k = sb2 + sw2 * np.sum(np.square(x), axis=1) / cfg.input_dim
    for _ in range(cfg.depth):
        k = sb2 + 0.5 * sw2 * k
    return k


def nngp_kernel(cfg: NngpKernelConfig, x: np.ndarray, z: np.ndarray) -> float:
    """Scalar kernel value k(x, z)."""
    return float(nngp_gram(cfg, np.atleast_2d(x), np.atleast_2d(z))[0, 0])


@dataclass(frozen=True)
class GPModel:
    """Exact GP regression model; immutable once fitted."""

    cfg: NngpKernelConfig
    train_x: np.ndarray
    train_y: np.ndarray
    noise_std: float
    lower: np.ndarray | None   # Cholesky factor of K + noise^2 I
    alpha: np.ndarray | None   # (K + noise^2 I)^-1 y

    @property
    def n_train(self) -> int:
        return self.train_x.shape[0]


def gp_fit(cfg: NngpKernelConfig, data, noise_std: float) -> GPModel:
    """Fit by factoring the noisy Gram matrix; N = 0 yields the prior model.

    ``data`` needs ``X`` and ``y`` attributes (or pass a (X, y) tuple).
    """
    if isinstance(data, tuple):
        x, y = data
    else:
        x, y = data.X, data.y
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    if x.shape[0] == 0:
        return GPModel(cfg, x, y, noise_std, None, None)
    gram = nngp_gram(cfg, x) + noise_std ** 2 * np.eye(x.shape[0])
    lower, _ = cholesky_factor(gram)
    alpha = solve_from_factor(lower, y)
    return GPModel(cfg, x, y, noise_std, lower, alpha)


def gp_predict(model: GPModel, x_star: np.ndarray) -> GaussianMoments:
    """Posterior predictive moments of the latent function at x_star."""
    x_star = np.atleast_2d(np.asarray(x_star, dtype=float))
    prior_var = nngp_diag(model.cfg, x_star)
    if model.n_train == 0:
        return GaussianMoments(np.zeros(x_star.shape[0]), prior_var)
    k_star = nngp_gram(model.cfg, model.train_x, x_star)
    mean = k_star.T @ model.alpha
    v = np.linalg.solve(model.lower, k_star)
    var = prior_var - np.sum(np.square(v), axis=0)
    if np.any(var < VAR_CLAMP_TOL):
        raise FloatingPointError(
            f"predictive variance fell below {VAR_CLAMP_TOL:g}; "
            "Gram matrix is badly conditioned")
    return GaussianMoments(mean, np.maximum(var, 0.0))
