"""Training objectives for the two approximating families.

All objectives have a public numpy-facing form returning a float and an
internal torch form (prefixed ``_t``) used by the training loop, HMC and
gradient checks. The torch forms accept a pre-drawn noise pack so the same
noise can be held fixed while parameters are perturbed, which makes
finite-difference gradient checks exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import torch

from . import tnets
from .networks import FFGParams, MCDOParams, NetworkSpec, PriorConfig
from .rng import RngStream

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Likelihood:
    """Homoskedastic Gaussian likelihood with fixed (not learned) noise std."""

    noise_std: float

    def __post_init__(self):
        if self.noise_std <= 0:
            raise ValueError("noise std must be positive")


def _prior_stds(spec: NetworkSpec, prior: PriorConfig):
    return [(prior.weight_std(fan_in), prior.sigma_b)
            for fan_in, _ in spec.layer_dims]


def gaussian_kl(q: FFGParams, prior: PriorConfig) -> float:
    """KL(q || p) for a factorised Gaussian q and the layered N(0, s^2) prior.

    Per parameter: log(s/sigma) + (sigma^2 + mu^2) / (2 s^2) - 1/2.
    """
    total = 0.0
    for (s_w, s_b), mu_w, ls_w, mu_b, ls_b in zip(
            _prior_stds(q.spec, prior), q.weight_mean, q.weight_log_std,
            q.bias_mean, q.bias_log_std):
        for s, mu, ls in ((s_w, mu_w, ls_w), (s_b, mu_b, ls_b)):
            var = np.exp(2.0 * ls)
            total += np.sum(math.log(s) - ls
                            + (var + np.square(mu)) / (2.0 * s * s) - 0.5)
    return float(total)


def _gaussian_kl_t(tq: tnets.TorchFFG, prior: PriorConfig) -> torch.Tensor:
    total = torch.zeros((), dtype=tnets.DTYPE)
    for (s_w, s_b), mu_w, ls_w, mu_b, ls_b in zip(
            _prior_stds(tq.spec, prior), tq.weight_mean, tq.weight_log_std,
            tq.bias_mean, tq.bias_log_std):
        for s, mu, ls in ((s_w, mu_w, ls_w), (s_b, mu_b, ls_b)):
            var = torch.exp(2.0 * ls)
            total = total + torch.sum(
                math.log(s) - ls + (var + mu * mu) / (2.0 * s * s) - 0.5)
    return total


def _gaussian_loglik(f: torch.Tensor, y: torch.Tensor,
                     noise_std: float) -> torch.Tensor:
    """Sum over data of log N(y | f, noise_std^2), averaged over sample axis."""
    if f.numel() == 0:
        return torch.zeros((), dtype=tnets.DTYPE)
    resid = f.squeeze(-1) - y
    per_sample = -0.5 * torch.sum(resid * resid, dim=-1) / noise_std ** 2 \
        - y.shape[-1] * (math.log(noise_std) + 0.5 * _LOG_2PI)
    return per_sample.mean()


def _elbo_t(tq: tnets.TorchFFG, x: torch.Tensor, y: torch.Tensor,
            lik: Likelihood, prior: PriorConfig,
            noise: list[torch.Tensor]) -> torch.Tensor:
    f = tnets.ffg_local_reparam_forward(tq, x, noise)
    return _gaussian_loglik(f, y, lik.noise_std) - _gaussian_kl_t(tq, prior)


def elbo(spec: NetworkSpec, q: FFGParams, data, lik: Likelihood,
         prior: PriorConfig, n_samples: int, rng: RngStream) -> float:
    """Monte Carlo ELBO estimate with local reparameterisation.

    ``data`` needs ``X`` (n, D) and ``y`` (n,) attributes; an empty dataset
    gives exactly -KL(q || prior).
    """
    if n_samples < 1:
        raise ValueError("need at least one Monte Carlo sample")
    tq = tnets.lift(q)
    x = torch.tensor(np.atleast_2d(data.X), dtype=tnets.DTYPE)
    y = torch.tensor(np.asarray(data.y, dtype=float), dtype=tnets.DTYPE)
    gen = rng.generator()
    noise = tnets.draw_local_reparam_noise(tq, x.shape[0], n_samples, gen)
    with torch.no_grad():
        return float(_elbo_t(tq, x, y, lik, prior, noise))


def mcdo_penalty(params: MCDOParams, prior: PriorConfig) -> float:
    """L2 penalty matching the prior: (1-p)/(2 s_w^2) ||W||^2 + ||b||^2/(2 s_b^2)."""
    p = params.dropout_rate
    total = 0.0
    for (s_w, s_b), w, b in zip(_prior_stds(params.spec, prior),
                                params.weights, params.biases):
        total += (1.0 - p) / (2.0 * s_w * s_w) * float(np.sum(np.square(w)))
        total += float(np.sum(np.square(b))) / (2.0 * s_b * s_b)
    return total


def _mcdo_penalty_t(tmc: tnets.TorchMCDO, prior: PriorConfig) -> torch.Tensor:
    p = tmc.dropout_rate
    total = torch.zeros((), dtype=tnets.DTYPE)
    for (s_w, s_b), w, b in zip(_prior_stds(tmc.spec, prior),
                                tmc.weights, tmc.biases):
        total = total + (1.0 - p) / (2.0 * s_w * s_w) * torch.sum(w * w)
        total = total + torch.sum(b * b) / (2.0 * s_b * s_b)
    return total


def _mcdo_objective_t(tmc: tnets.TorchMCDO, x: torch.Tensor, y: torch.Tensor,
                      lik: Likelihood, prior: PriorConfig,
                      masks: list[torch.Tensor]) -> torch.Tensor:
    f = tnets.mcdo_mask_forward(tmc, x, masks)
    nll = -_gaussian_loglik(f, y, lik.noise_std)
    return nll + _mcdo_penalty_t(tmc, prior)


def mcdo_objective(spec: NetworkSpec, params: MCDOParams, data,
                   lik: Likelihood, prior: PriorConfig, n_samples: int,
                   rng: RngStream) -> float:
    """Mask-averaged negative log likelihood plus the matching L2 penalty."""
    if n_samples < 1:
        raise ValueError("need at least one Monte Carlo sample")
    tmc = tnets.lift(params)
    x = torch.tensor(np.atleast_2d(data.X), dtype=tnets.DTYPE)
    y = torch.tensor(np.asarray(data.y, dtype=float), dtype=tnets.DTYPE)
    masks = tnets.draw_mcdo_masks(tmc, n_samples, rng.generator())
    with torch.no_grad():
        return float(_mcdo_objective_t(tmc, x, y, lik, prior, masks))


def _mc_moments(f: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    mean = f.mean(dim=0)
    var = f.var(dim=0, unbiased=True)
    return mean.squeeze(-1), var.squeeze(-1)


def _moment_match_t(tdist, x: torch.Tensor, target_mean: torch.Tensor,
                    target_var: torch.Tensor, noise) -> torch.Tensor:
    if isinstance(tdist, tnets.TorchFFG):
        f = tnets.ffg_sample_forward(tdist, x, noise)
    else:
        f = tnets.mcdo_mask_forward(tdist, x, noise)
    mean, var = _mc_moments(f)
    return torch.sum(torch.square(mean - target_mean)) \
        + torch.sum(torch.square(var - target_var))


def moment_match_loss(spec: NetworkSpec, dist: FFGParams | MCDOParams,
                      grid_x: np.ndarray, target_mean: np.ndarray,
                      target_var: np.ndarray, n_samples: int,
                      rng: RngStream) -> float:
    """Squared error between MC-estimated output moments and targets on a grid."""
    grid_x = np.atleast_2d(np.asarray(grid_x, dtype=float))
    if grid_x.shape[0] == 0:
        raise ValueError("grid must be nonempty")
    tdist = tnets.lift(dist)
    x = torch.tensor(grid_x, dtype=tnets.DTYPE)
    gen = rng.generator()
    if isinstance(tdist, tnets.TorchFFG):
        noise = tnets.draw_ffg_weight_noise(tdist, n_samples, gen)
    else:
        noise = tnets.draw_mcdo_masks(tdist, n_samples, gen)
    tm = torch.tensor(np.asarray(target_mean, dtype=float), dtype=tnets.DTYPE)
    tv = torch.tensor(np.asarray(target_var, dtype=float), dtype=tnets.DTYPE)
    with torch.no_grad():
        return float(_moment_match_t(tdist, x, tm, tv, noise))


def interpolated_loss(moment_loss, variational_loss, alpha: float):
    """Convex combination alpha * L1 + (1 - alpha) * L2."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    return alpha * moment_loss + (1.0 - alpha) * variational_loss


def grad(objective: Callable[[], torch.Tensor],
         params: list[torch.Tensor]) -> tuple[float, list[np.ndarray]]:
    """Reverse-mode gradients of a scalar objective w.r.t. torch leaves.

    Returns (loss value, per-tensor gradients). Raises on non-finite loss.
    """
    loss = objective()
    if not torch.isfinite(loss):
        raise FloatingPointError(f"objective is not finite: {float(loss)!r}")
    if not loss.requires_grad:
        return float(loss), [np.zeros(p.shape) for p in params]
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    out = [np.zeros(p.shape) if g is None else g.detach().numpy().copy()
           for p, g in zip(params, grads)]
    return float(loss), out
