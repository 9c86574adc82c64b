"""Torch views of parameter containers, used by training objectives and HMC.

Containers in :mod:`bnnuq.networks` are numpy-backed and immutable; this
module lifts them to float64 torch leaf tensors for reverse-mode
differentiation and lowers the results back. All sampling here is
reparameterised so gradients flow to the variational parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .networks import FFGParams, MCDOParams, NetworkSpec

DTYPE = torch.float64


def _leaf(a: np.ndarray) -> torch.Tensor:
    t = torch.tensor(np.asarray(a, dtype=float), dtype=DTYPE)
    t.requires_grad_(True)
    return t


@dataclass
class TorchFFG:
    spec: NetworkSpec
    weight_mean: list[torch.Tensor]
    weight_log_std: list[torch.Tensor]
    bias_mean: list[torch.Tensor]
    bias_log_std: list[torch.Tensor]

    def parameters(self) -> list[torch.Tensor]:
        return [*self.weight_mean, *self.weight_log_std,
                *self.bias_mean, *self.bias_log_std]


@dataclass
class TorchMCDO:
    spec: NetworkSpec
    weights: list[torch.Tensor]
    biases: list[torch.Tensor]
    dropout_rate: float
    drop_inputs: bool

    def parameters(self) -> list[torch.Tensor]:
        return [*self.weights, *self.biases]


def lift(dist: FFGParams | MCDOParams) -> TorchFFG | TorchMCDO:
    if isinstance(dist, FFGParams):
        return TorchFFG(dist.spec,
                        [_leaf(a) for a in dist.weight_mean],
                        [_leaf(a) for a in dist.weight_log_std],
                        [_leaf(a) for a in dist.bias_mean],
                        [_leaf(a) for a in dist.bias_log_std])
    return TorchMCDO(dist.spec,
                     [_leaf(a) for a in dist.weights],
                     [_leaf(a) for a in dist.biases],
                     dist.dropout_rate, dist.drop_inputs)


def lower(tdist: TorchFFG | TorchMCDO) -> FFGParams | MCDOParams:
    def npy(ts):
        return [t.detach().numpy().copy() for t in ts]

    if isinstance(tdist, TorchFFG):
        return FFGParams(tdist.spec, npy(tdist.weight_mean),
                         npy(tdist.weight_log_std), npy(tdist.bias_mean),
                         npy(tdist.bias_log_std))
    return MCDOParams(tdist.spec, npy(tdist.weights), npy(tdist.biases),
                      tdist.dropout_rate, tdist.drop_inputs)


def _randn(gen: np.random.Generator, shape) -> torch.Tensor:
    # numpy's vectorised Philox is much faster than per-tensor torch draws
    return torch.from_numpy(gen.standard_normal(shape))


def draw_ffg_weight_noise(tq: TorchFFG, n_samples: int,
                          gen: np.random.Generator
                          ) -> list[tuple[torch.Tensor, torch.Tensor]]:
    """Standard-normal noise for weight-space reparameterised sampling."""
    return [(_randn(gen, (n_samples, *mu.shape)),
             _randn(gen, (n_samples, *b.shape)))
            for mu, b in zip(tq.weight_mean, tq.bias_mean)]


def ffg_sample_forward(tq: TorchFFG, x: torch.Tensor, noise) -> torch.Tensor:
    """Forward with weights theta = mu + sigma*eps; returns (S, n, K)."""
    n_layers = len(tq.weight_mean)
    h = x.unsqueeze(0)
    for layer in range(n_layers):
        eps_w, eps_b = noise[layer]
        w = tq.weight_mean[layer] + torch.exp(tq.weight_log_std[layer]) * eps_w
        b = tq.bias_mean[layer] + torch.exp(tq.bias_log_std[layer]) * eps_b
        z = torch.einsum("sni,soi->sno", h.expand(w.shape[0], -1, -1), w) \
            + b.unsqueeze(1)
        h = torch.relu(z) if layer < n_layers - 1 else z
    return h


def draw_local_reparam_noise(tq: TorchFFG, n_points: int, n_samples: int,
                             gen: np.random.Generator) -> list[torch.Tensor]:
    """Pre-activation noise, one (S, n, fan_out) tensor per layer."""
    return [_randn(gen, (n_samples, n_points, mu.shape[0]))
            for mu in tq.weight_mean]


def ffg_local_reparam_forward(tq: TorchFFG, x: torch.Tensor,
                              noise: list[torch.Tensor]) -> torch.Tensor:
    """Forward sampling pre-activations instead of weights; (S, n, K).

    Each affine layer's output given its input h is Gaussian with diagonal
    covariance, so z = m(h) + sqrt(v(h)) * eps is an exact sample. The
    first layer's statistics are shared across samples; deeper layers run
    as flat 2D matmuls (cheaper than batched 3D kernels).
    """
    n_layers = len(tq.weight_mean)
    n_samples, n_points = noise[0].shape[:2]
    var_w = torch.exp(2.0 * tq.weight_log_std[0])
    var_b = torch.exp(2.0 * tq.bias_log_std[0])
    m = x @ tq.weight_mean[0].T + tq.bias_mean[0]
    v = torch.square(x) @ var_w.T + var_b
    z = (m + torch.sqrt(v) * noise[0]).reshape(n_samples * n_points, -1)
    for layer in range(1, n_layers):
        h = torch.relu(z)
        var_w = torch.exp(2.0 * tq.weight_log_std[layer])
        var_b = torch.exp(2.0 * tq.bias_log_std[layer])
        m = h @ tq.weight_mean[layer].T + tq.bias_mean[layer]
        v = torch.square(h) @ var_w.T + var_b
        z = m + torch.sqrt(v) * noise[layer].reshape(m.shape)
    return z.reshape(n_samples, n_points, -1)


def draw_mcdo_masks(tmc: TorchMCDO, n_samples: int,
                    gen: np.random.Generator) -> list[torch.Tensor]:
    """Bernoulli(1-p) column masks, one (S, fan_in) tensor per layer."""
    keep = 1.0 - tmc.dropout_rate
    masks = []
    for layer, w in enumerate(tmc.weights):
        fan_in = w.shape[1]
        if layer == 0 and not tmc.drop_inputs:
            masks.append(torch.ones((n_samples, fan_in), dtype=DTYPE))
        else:
            u = gen.random((n_samples, fan_in))
            masks.append(torch.from_numpy((u < keep).astype(float)))
    return masks


def mcdo_mask_forward(tmc: TorchMCDO, x: torch.Tensor,
                      masks: list[torch.Tensor]) -> torch.Tensor:
    """Forward with masked unit outputs; masks shared across the batch."""
    n_layers = len(tmc.weights)
    h = x.unsqueeze(0).expand(masks[0].shape[0], -1, -1)
    for layer in range(n_layers):
        hm = h * masks[layer].unsqueeze(1)
        z = hm @ tmc.weights[layer].T + tmc.biases[layer]
        h = torch.relu(z) if layer < n_layers - 1 else z
    return h


def flatten_params(theta: list[torch.Tensor]) -> torch.Tensor:
    return torch.cat([t.reshape(-1) for t in theta])


def unflatten_like(flat: torch.Tensor, like: list[torch.Tensor]) -> list[torch.Tensor]:
    out, i = [], 0
    for t in like:
        n = t.numel()
        out.append(flat[i:i + n].reshape(t.shape))
        i += n
    return out
