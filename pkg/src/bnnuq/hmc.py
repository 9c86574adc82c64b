"""Plain Hamiltonian Monte Carlo with leapfrog integration.

The sampler targets the BNN posterior p(theta | D) under the layered
Gaussian prior and homoskedastic Gaussian likelihood. Step size is adapted
during warmup only, by doubling/halving towards an acceptance rate in
[0.6, 0.9]; after warmup it is frozen so the chain leaves the target
invariant.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .networks import NetworkSpec, PriorConfig, forward
from .objectives import Likelihood
from .rng import RngStream

ACCEPT_LOW, ACCEPT_HIGH = 0.6, 0.9


class ZeroAcceptanceError(RuntimeError):
    """No proposal was accepted after warmup finished."""


@dataclass(frozen=True)
class HmcConfig:
    step_size: float
    leapfrog_steps: int
    warmup: int
    samples: int
    mass: float = 1.0
    adapt_every: int = 50

    def __post_init__(self):
        if self.step_size <= 0 or self.leapfrog_steps < 1:
            raise ValueError("step size and leapfrog steps must be positive")
        if self.mass <= 0:
            raise ValueError("mass must be positive")


@dataclass
class HmcResult:
    samples: np.ndarray          # (n_samples, dim)
    acceptance_rate: float
    step_size: float


def leapfrog(q: np.ndarray, p: np.ndarray, step_size: float, n_steps: int,
             grad_u: Callable[[np.ndarray], np.ndarray], mass: float = 1.0):
    """Symplectic leapfrog integration of Hamilton's equations.

    Divergent trajectories are abandoned as soon as the state goes
    non-finite; the caller's Metropolis step then rejects them.
    """
    p = p - 0.5 * step_size * grad_u(q)
    for step in range(n_steps):
        q = q + step_size * p / mass
        if not np.all(np.isfinite(q)):
            return q, p
        if step < n_steps - 1:
            p = p - step_size * grad_u(q)
    p = p - 0.5 * step_size * grad_u(q)
    return q, p


def hmc_core(value_and_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
             q0: np.ndarray, config: HmcConfig,
             gen: np.random.Generator) -> HmcResult:
    """Run warmup plus sampling from a generic potential U = -log density."""
    def grad_u(q):
        return value_and_grad(q)[1]

    q = np.asarray(q0, dtype=float).copy()
    u_cur = value_and_grad(q)[0]
    step_size = config.step_size
    dim = q.size
    samples = np.empty((config.samples, dim))
    accepted_main = 0
    window_accept = 0
    # smallest step size whose warmup window under-accepted; never double
    # back into it (prevents ping-ponging onto an unstable step size)
    known_bad = np.inf
    for it in range(config.warmup + config.samples):
        p = gen.standard_normal(dim) * np.sqrt(config.mass)
        q_new, p_new = leapfrog(q, p, step_size, config.leapfrog_steps,
                                grad_u, config.mass)
        u_new = value_and_grad(q_new)[0] if np.all(np.isfinite(q_new)) \
            else np.inf
        h_old = u_cur + 0.5 * np.dot(p, p) / config.mass
        h_new = u_new + 0.5 * np.dot(p_new, p_new) / config.mass
        log_alpha = h_old - h_new
        accept = bool(np.isfinite(u_new)) and np.log(gen.random()) < log_alpha
        if accept:
            q, u_cur = q_new, u_new
        in_warmup = it < config.warmup
        if in_warmup:
            window_accept += accept
            if (it + 1) % config.adapt_every == 0:
                rate = window_accept / config.adapt_every
                if rate < ACCEPT_LOW:
                    known_bad = min(known_bad, step_size)
                    step_size *= 0.5
                elif rate > ACCEPT_HIGH and 2.0 * step_size < known_bad:
                    step_size *= 2.0
                window_accept = 0
        else:
            accepted_main += accept
            samples[it - config.warmup] = q
    rate = accepted_main / config.samples
    if config.samples > 0 and accepted_main == 0:
        raise ZeroAcceptanceError(
            f"no accepted proposals in {config.samples} post-warmup draws")
    return HmcResult(samples, rate, step_size)


def _template(spec: NetworkSpec, frozen_input_layer=None):
    """Zero parameter template; frozen first layer is excluded if given."""
    dims = spec.layer_dims
    shapes = []
    for layer, (fan_in, fan_out) in enumerate(dims):
        if layer == 0 and frozen_input_layer is not None:
            continue
        shapes.append((fan_out, fan_in))
        shapes.append((fan_out,))
    return shapes


def bnn_potential(spec: NetworkSpec, prior: PriorConfig, data,
                  lik: Likelihood, frozen_input_layer=None):
    """U(theta) and its gradient for the BNN posterior (up to a constant).

    The gradient is a hand-rolled backward pass over the fixed MLP graph
    (orders of magnitude cheaper per call than building an autodiff graph,
    which matters inside the leapfrog loop). ``frozen_input_layer``
    optionally fixes the first layer at concrete (W0, b0), excluding it from
    the sampled vector (used to drive the sampler against conjugate
    reference posteriors).
    """
    x = np.atleast_2d(np.asarray(data.X, dtype=float))
    y = np.asarray(data.y, dtype=float)
    dims = spec.layer_dims
    shapes = _template(spec, frozen_input_layer)
    n_layers = len(dims)
    inv_noise_var = 1.0 / lik.noise_std ** 2
    prior_inv_var = []
    for layer, (fan_in, _) in enumerate(dims):
        if layer == 0 and frozen_input_layer is not None:
            continue
        prior_inv_var.append((1.0 / prior.weight_std(fan_in) ** 2,
                              1.0 / prior.sigma_b ** 2))

    def unpack(q: np.ndarray):
        theta, i, offset = [], 0, 0
        for layer in range(n_layers):
            if layer == 0 and frozen_input_layer is not None:
                theta.append(frozen_input_layer)
                continue
            w_shape = shapes[offset]
            b_shape = shapes[offset + 1]
            offset += 2
            n_w = int(np.prod(w_shape))
            w = q[i:i + n_w].reshape(w_shape)
            i += n_w
            b = q[i:i + b_shape[0]]
            i += b_shape[0]
            theta.append((w, b))
        return theta

    def value_and_grad(q: np.ndarray) -> tuple[float, np.ndarray]:
        with np.errstate(all="ignore"):
            return _value_and_grad(q)

    def _value_and_grad(q: np.ndarray) -> tuple[float, np.ndarray]:
        theta = unpack(q)
        u = 0.0
        sampled = [t for layer, t in enumerate(theta)
                   if not (layer == 0 and frozen_input_layer is not None)]
        for (w, b), (iv_w, iv_b) in zip(sampled, prior_inv_var):
            u += 0.5 * iv_w * float(np.sum(w * w))
            u += 0.5 * iv_b * float(np.sum(b * b))
        # forward, remembering activations for the backward sweep
        hs = [x]
        zs = []
        h = x
        for layer, (w, b) in enumerate(theta):
            z = h @ w.T + b
            zs.append(z)
            if layer < n_layers - 1:
                h = np.maximum(z, 0.0)
                hs.append(h)
        if y.size:
            resid = zs[-1][:, 0] - y
            u += 0.5 * inv_noise_var * float(resid @ resid)
            dz = np.zeros_like(zs[-1])
            dz[:, 0] = inv_noise_var * resid
        else:
            dz = np.zeros_like(zs[-1])
        grads = [None] * n_layers
        for layer in range(n_layers - 1, -1, -1):
            w, _ = theta[layer]
            grads[layer] = (dz.T @ hs[layer], dz.sum(axis=0))
            if layer > 0:
                dz = (dz @ w) * (zs[layer - 1] > 0)
        flat = []
        idx = 0
        for layer in range(n_layers):
            if layer == 0 and frozen_input_layer is not None:
                continue
            iv_w, iv_b = prior_inv_var[idx]
            idx += 1
            w, b = theta[layer]
            dw, db = grads[layer]
            flat.append((dw + iv_w * w).ravel())
            flat.append(db + iv_b * b)
        return u, np.concatenate(flat)

    dim = sum(int(np.prod(s)) for s in shapes)
    return value_and_grad, dim, shapes


@dataclass
class BnnHmcResult:
    spec: NetworkSpec
    samples: np.ndarray
    acceptance_rate: float
    step_size: float
    shapes: list[tuple]
    frozen_input_layer: tuple | None = None

    def theta(self, index: int):
        """Materialise one posterior draw as a per-layer (W, b) list."""
        flat = self.samples[index]
        parts, i = [], 0
        for shape in self.shapes:
            n = int(np.prod(shape))
            parts.append(flat[i:i + n].reshape(shape))
            i += n
        theta, offset = [], 0
        for layer in range(len(self.spec.layer_dims)):
            if layer == 0 and self.frozen_input_layer is not None:
                theta.append(self.frozen_input_layer)
                continue
            theta.append((parts[offset], parts[offset + 1]))
            offset += 2
        return theta

    def predict(self, x: np.ndarray, max_draws: int | None = None):
        """Posterior predictive mean/variance of f(x) over stored draws."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        n_draws = self.samples.shape[0]
        take = n_draws if max_draws is None else min(max_draws, n_draws)
        idx = np.linspace(0, n_draws - 1, take).astype(int)
        total = np.zeros((x.shape[0], self.spec.output_dim))
        total_sq = np.zeros_like(total)
        for i in idx:
            out = forward(self.spec, self.theta(int(i)), x)
            total += out
            total_sq += np.square(out)
        mean = total / take
        var = (total_sq - take * np.square(mean)) / (take - 1)
        return mean, np.maximum(var, 0.0)


def hmc_sample(spec: NetworkSpec, prior: PriorConfig, data, lik: Likelihood,
               config: HmcConfig, rng: RngStream,
               init: np.ndarray | None = None,
               frozen_input_layer=None) -> BnnHmcResult:
    """Sample the BNN posterior with plain HMC; reports acceptance rate."""
    value_and_grad, dim, shapes = bnn_potential(
        spec, prior, data, lik, frozen_input_layer)
    gen = rng.generator()
    if init is None:
        scales = []
        for layer, (fan_in, fan_out) in enumerate(spec.layer_dims):
            if layer == 0 and frozen_input_layer is not None:
                continue
            scales.append(np.full(fan_out * fan_in, prior.weight_std(fan_in)))
            scales.append(np.full(fan_out, prior.sigma_b))
        init = np.concatenate(scales) * gen.standard_normal(dim)
    result = hmc_core(value_and_grad, init, config, gen)
    return BnnHmcResult(spec, result.samples, result.acceptance_rate,
                        result.step_size, shapes, frozen_input_layer)
