"""Fully-connected ReLU networks and distributions over their parameters.

Two approximating families are supported:

* :class:`FFGParams` -- a fully-factorised Gaussian (per-parameter mean and
  log standard deviation).
* :class:`MCDOParams` -- deterministic weights with Bernoulli dropout masks
  on unit outputs (and optionally on the inputs).

Besides Monte Carlo prediction, exact output moments are available in
closed form for single-hidden-layer networks of either family.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .moments import (GaussianMoments, relu_gaussian_mean,
                      relu_gaussian_second_moment, relu_gaussian_var)
from .rng import RngStream

_MC_BLOCK = 20_000        # max parameter samples per predictive_mc block
_MC_BLOCK_BUDGET = 1e7    # max scalars (params + activations) per block


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture of a fully-connected ReLU network."""

    input_dim: int
    hidden_widths: tuple[int, ...]
    output_dim: int = 1

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(self.hidden_widths))
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("dimensions must be >= 1")
        if len(self.hidden_widths) < 1 or any(w < 1 for w in self.hidden_widths):
            raise ValueError("need at least one hidden layer of width >= 1")

    @property
    def depth(self) -> int:
        return len(self.hidden_widths)

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        """(fan_in, fan_out) of every affine layer, input to readout."""
        dims = [self.input_dim, *self.hidden_widths, self.output_dim]
        return list(zip(dims[:-1], dims[1:]))


@dataclass(frozen=True)
class PriorConfig:
    """Independent N(0, sigma_w^2 / fan_in) weight and N(0, sigma_b^2) bias priors."""

    sigma_w: float
    sigma_b: float

    def __post_init__(self):
        if self.sigma_w <= 0 or self.sigma_b <= 0:
            raise ValueError("prior scales must be positive")

    def weight_std(self, fan_in: int) -> float:
        return self.sigma_w / math.sqrt(fan_in)


def _check_shapes(spec: NetworkSpec, weights, biases):
    dims = spec.layer_dims
    if len(weights) != len(dims) or len(biases) != len(dims):
        raise ValueError("layer count mismatch with spec")
    for (fan_in, fan_out), w, b in zip(dims, weights, biases):
        if w.shape != (fan_out, fan_in) or b.shape != (fan_out,):
            raise ValueError(
                f"shape mismatch: expected {(fan_out, fan_in)}/{(fan_out,)}, "
                f"got {w.shape}/{b.shape}")


@dataclass(frozen=True)
class FFGParams:
    """Fully-factorised Gaussian over all weights and biases.

    Standard deviations are stored as logs so positivity survives gradient
    updates. Arrays are per-layer: weights ``(fan_out, fan_in)``, biases
    ``(fan_out,)``.
    """

    spec: NetworkSpec
    weight_mean: list[np.ndarray]
    weight_log_std: list[np.ndarray]
    bias_mean: list[np.ndarray]
    bias_log_std: list[np.ndarray]

    def __post_init__(self):
        _check_shapes(self.spec, self.weight_mean, self.bias_mean)
        _check_shapes(self.spec, self.weight_log_std, self.bias_log_std)
        for arr in (*self.weight_log_std, *self.bias_log_std):
            if not np.all(np.isfinite(arr)):
                raise ValueError("log stds must be finite")

    @property
    def weight_std(self) -> list[np.ndarray]:
        return [np.exp(a) for a in self.weight_log_std]

    @property
    def bias_std(self) -> list[np.ndarray]:
        return [np.exp(a) for a in self.bias_log_std]

    def n_params(self) -> int:
        return sum(a.size for a in self.weight_mean) + \
            sum(a.size for a in self.bias_mean)


@dataclass(frozen=True)
class MCDOParams:
    """Deterministic weights with Bernoulli(1-p) masks on unit outputs.

    Masks multiply the columns of each weight matrix (the previous layer's
    outputs); the input itself is masked iff ``drop_inputs``.
    """

    spec: NetworkSpec
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    dropout_rate: float
    drop_inputs: bool = False

    def __post_init__(self):
        _check_shapes(self.spec, self.weights, self.biases)
        if not 0.0 < self.dropout_rate < 1.0:
            raise ValueError("dropout rate must lie in (0, 1)")


ParamDist = FFGParams | MCDOParams


def forward(spec: NetworkSpec, theta: list[tuple[np.ndarray, np.ndarray]],
            x: np.ndarray) -> np.ndarray:
    """Deterministic forward pass; ReLU between layers, affine readout.

    ``theta`` is a list of (W, b) per layer. Batched parameter sets with a
    leading sample axis ``(S, fan_out, fan_in)`` are accepted and produce
    ``(S, n, output_dim)``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[-1] != spec.input_dim:
        raise ValueError(f"input dim {x.shape[-1]} != spec {spec.input_dim}")
    batched = theta[0][0].ndim == 3
    h = x[None, :, :] if batched else x
    n_layers = len(spec.layer_dims)
    for layer, (w, b) in enumerate(theta):
        if batched:
            z = np.einsum("sni,soi->sno", h, w) + b[:, None, :]
        else:
            z = h @ w.T + b
        h = np.maximum(z, 0.0) if layer < n_layers - 1 else z
    return h


def sample_params(dist: ParamDist, rng: RngStream | np.random.Generator,
                  n_samples: int | None = None):
    """Draw concrete parameters from ``dist``.

    FFG: ``theta = mu + sigma * eps`` with standard-normal ``eps``.
    MCDO: column masks per layer, one mask vector per sample (shared across
    a batch row, independent across samples).

    With ``n_samples`` given, arrays gain a leading sample axis.
    """
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    squeeze = n_samples is None
    s = 1 if squeeze else n_samples
    theta = []
    if isinstance(dist, FFGParams):
        for mu_w, sd_w, mu_b, sd_b in zip(dist.weight_mean, dist.weight_std,
                                          dist.bias_mean, dist.bias_std):
            w = mu_w + sd_w * gen.standard_normal((s, *mu_w.shape))
            b = mu_b + sd_b * gen.standard_normal((s, *mu_b.shape))
            theta.append((w, b))
    else:
        keep = 1.0 - dist.dropout_rate
        for layer, (w, b) in enumerate(zip(dist.weights, dist.biases)):
            fan_in = w.shape[1]
            if layer == 0 and not dist.drop_inputs:
                mask = np.ones((s, fan_in))
            else:
                mask = (gen.random((s, fan_in)) < keep).astype(float)
            theta.append((w[None, :, :] * mask[:, None, :],
                          np.broadcast_to(b, (s, *b.shape)).copy()))
    if squeeze:
        theta = [(w[0], b[0]) for w, b in theta]
    return theta


def _ffg_forward_sampled(dist: FFGParams, x: np.ndarray, block: int,
                         gen: np.random.Generator) -> np.ndarray:
    """Forward under sampled weights, shaped (n, S, K).

    The first layer's input is shared across samples, so it runs as one
    flat matmul over all sampled units; deeper layers contract per sample.
    """
    n_layers = len(dist.weight_mean)
    n = x.shape[0]
    h = None
    for layer, (mu_w, sd_w, mu_b, sd_b) in enumerate(zip(
            dist.weight_mean, dist.weight_std, dist.bias_mean,
            dist.bias_std)):
        w = mu_w + sd_w * gen.standard_normal((block, *mu_w.shape))
        b = mu_b + sd_b * gen.standard_normal((block, *mu_b.shape))
        if layer == 0:
            fan_out, fan_in = mu_w.shape
            z = (x @ w.reshape(block * fan_out, fan_in).T) \
                .reshape(n, block, fan_out) + b[None, :, :]
        else:
            z = np.einsum("nsi,soi->nso", h, w) + b[None, :, :]
        h = np.maximum(z, 0.0) if layer < n_layers - 1 else z
    return h


def _mcdo_forward_masked(dist: MCDOParams, x: np.ndarray, block: int,
                         gen: np.random.Generator) -> np.ndarray:
    """MCDO forward masking activations in place of weight copies; (S, n, K)."""
    keep = 1.0 - dist.dropout_rate
    n_layers = len(dist.weights)
    h = np.broadcast_to(x, (block, *x.shape))
    for layer, (w, b) in enumerate(zip(dist.weights, dist.biases)):
        if layer > 0 or dist.drop_inputs:
            mask = (gen.random((block, w.shape[1])) < keep).astype(float)
            h = h * mask[:, None, :]
        z = h @ w.T + b
        h = np.maximum(z, 0.0) if layer < n_layers - 1 else z
    return h


def predictive_mc(spec: NetworkSpec, dist: ParamDist, x: np.ndarray,
                  n_samples: int, rng: RngStream) -> GaussianMoments:
    """Per-point empirical mean and unbiased variance of f(x) over draws."""
    if n_samples < 2:
        raise ValueError("need at least two samples for an unbiased variance")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    gen = rng.generator()
    total = np.zeros((x.shape[0], spec.output_dim))
    total_sq = np.zeros_like(total)
    width = max(fo for _, fo in spec.layer_dims)
    cost = x.shape[0] * width
    if isinstance(dist, FFGParams):
        cost += sum(fi * fo + fo for fi, fo in spec.layer_dims)
    block_cap = max(1, min(_MC_BLOCK, int(_MC_BLOCK_BUDGET / max(cost, 1))))
    done = 0
    while done < n_samples:
        block = min(block_cap, n_samples - done)
        if isinstance(dist, FFGParams):
            out = _ffg_forward_sampled(dist, x, block, gen)
            total += out.sum(axis=1)
            total_sq += np.square(out).sum(axis=1)
        else:
            out = _mcdo_forward_masked(dist, x, block, gen)
            total += out.sum(axis=0)
            total_sq += np.square(out).sum(axis=0)
        done += block
    mean = total / n_samples
    var = (total_sq - n_samples * np.square(mean)) / (n_samples - 1)
    return GaussianMoments(mean, np.maximum(var, 0.0))


def preactivation_moments_1hl(dist: FFGParams, x: np.ndarray):
    """Mean and variance of each hidden pre-activation of a 1HL FFG net."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    mu_u, mu_v = dist.weight_mean[0], dist.bias_mean[0]
    var_u = np.square(dist.weight_std[0])
    var_v = np.square(dist.bias_std[0])
    mean_a = x @ mu_u.T + mu_v
    var_a = np.square(x) @ var_u.T + var_v
    return mean_a, var_a


def closed_form_1hl_moments(spec: NetworkSpec, dist: FFGParams,
                            x: np.ndarray) -> GaussianMoments:
    """Exact output mean/variance of a 1HL FFG network.

    With hidden pre-activations a_i ~ N(mean_a_i, var_a_i) independent of the
    readout layer:

        mean_k = sum_i mu_w[k,i] E[psi(a_i)] + mu_b[k]
        var_k  = sum_i mu_w[k,i]^2 Var[psi(a_i)]
               + sum_i sd_w[k,i]^2 E[psi(a_i)^2] + sd_b[k]^2
    """
    if spec.depth != 1:
        raise ValueError("closed form requires exactly one hidden layer")
    mean_a, var_a = preactivation_moments_1hl(dist, x)
    m1 = relu_gaussian_mean(mean_a, var_a)
    v1 = relu_gaussian_var(mean_a, var_a)
    m2 = v1 + np.square(m1)
    mu_w, mu_b = dist.weight_mean[1], dist.bias_mean[1]
    var_w = np.square(dist.weight_std[1])
    var_b = np.square(dist.bias_std[1])
    mean = m1 @ mu_w.T + mu_b
    var = v1 @ np.square(mu_w).T + m2 @ var_w.T + var_b
    return GaussianMoments(mean, var)


def closed_form_1hl_moments_mcdo(spec: NetworkSpec, dist: MCDOParams,
                                 x: np.ndarray) -> GaussianMoments:
    """Exact output mean/variance of a 1HL dropout network (inputs kept).

    The hidden activations are deterministic, so

        mean_k = (1-p) sum_i w[k,i] psi(a_i) + b[k]
        var_k  = p(1-p) sum_i w[k,i]^2 psi(a_i)^2
    """
    if spec.depth != 1:
        raise ValueError("closed form requires exactly one hidden layer")
    if dist.drop_inputs:
        raise ValueError("no closed form with inputs dropped; use predictive_mc")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    p = dist.dropout_rate
    act = np.maximum(x @ dist.weights[0].T + dist.biases[0], 0.0)
    w, b = dist.weights[1], dist.biases[1]
    mean = (1.0 - p) * (act @ w.T) + b
    var = p * (1.0 - p) * (np.square(act) @ np.square(w).T)
    return GaussianMoments(mean, var)


def init_params(spec: NetworkSpec, method: str, prior: PriorConfig,
                rng: RngStream, dropout_rate: float = 0.05,
                drop_inputs: bool = False) -> ParamDist:
    """Build an initial parameter distribution.

    ``mfvi-default``: weight means ~ N(0, 1/sqrt(2 fan_out)), all log stds
    log(1e-5), bias means zero.
    ``prior``: FFG equal to the prior (zero means, prior stds).
    ``mcdo-default``: weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    """
    gen = rng.generator()
    dims = spec.layer_dims
    if method == "mfvi-default":
        tiny = math.log(1e-5)
        w_mu = [math.pow(2 * fo, -0.25) * gen.standard_normal((fo, fi))
                for fi, fo in dims]
        return FFGParams(
            spec,
            weight_mean=w_mu,
            weight_log_std=[np.full((fo, fi), tiny) for fi, fo in dims],
            bias_mean=[np.zeros(fo) for _, fo in dims],
            bias_log_std=[np.full(fo, tiny) for _, fo in dims],
        )
    if method == "prior":
        return FFGParams(
            spec,
            weight_mean=[np.zeros((fo, fi)) for fi, fo in dims],
            weight_log_std=[np.full((fo, fi), math.log(prior.weight_std(fi)))
                            for fi, fo in dims],
            bias_mean=[np.zeros(fo) for _, fo in dims],
            bias_log_std=[np.full(fo, math.log(prior.sigma_b)) for _, fo in dims],
        )
    if method == "mcdo-default":
        weights, biases = [], []
        for fi, fo in dims:
            bound = 1.0 / math.sqrt(fi)
            weights.append(gen.uniform(-bound, bound, (fo, fi)))
            biases.append(gen.uniform(-bound, bound, fo))
        return MCDOParams(spec, weights, biases, dropout_rate, drop_inputs)
    raise ValueError(f"unknown init method {method!r}")


def params_to_json(dist: ParamDist) -> str:
    """Self-describing JSON: spec + flat row-major arrays with shape headers."""
    def pack(arrays, names):
        return {name: {"shape": list(a.shape), "data": a.ravel(order="C").tolist()}
                for name, a in zip(names, arrays)}

    doc = {
        "format": "bnnuq-params-v1",
        "spec": {"input_dim": dist.spec.input_dim,
                 "hidden_widths": list(dist.spec.hidden_widths),
                 "output_dim": dist.spec.output_dim},
    }
    n = len(dist.spec.layer_dims)
    if isinstance(dist, FFGParams):
        doc["kind"] = "ffg"
        doc["arrays"] = {
            **pack(dist.weight_mean, [f"weight_mean_{i}" for i in range(n)]),
            **pack(dist.weight_log_std, [f"weight_log_std_{i}" for i in range(n)]),
            **pack(dist.bias_mean, [f"bias_mean_{i}" for i in range(n)]),
            **pack(dist.bias_log_std, [f"bias_log_std_{i}" for i in range(n)]),
        }
    else:
        doc["kind"] = "mcdo"
        doc["dropout_rate"] = dist.dropout_rate
        doc["drop_inputs"] = dist.drop_inputs
        doc["arrays"] = {
            **pack(dist.weights, [f"weight_{i}" for i in range(n)]),
            **pack(dist.biases, [f"bias_{i}" for i in range(n)]),
        }
    return json.dumps(doc)


def params_from_json(text: str) -> ParamDist:
    doc = json.loads(text)
    if doc.get("format") != "bnnuq-params-v1":
        raise ValueError("unrecognised parameter file format")
    spec = NetworkSpec(doc["spec"]["input_dim"],
                       tuple(doc["spec"]["hidden_widths"]),
                       doc["spec"]["output_dim"])
    arrays = {name: np.asarray(rec["data"], dtype=float).reshape(rec["shape"])
              for name, rec in doc["arrays"].items()}
    n = len(spec.layer_dims)
    if doc["kind"] == "ffg":
        return FFGParams(
            spec,
            weight_mean=[arrays[f"weight_mean_{i}"] for i in range(n)],
            weight_log_std=[arrays[f"weight_log_std_{i}"] for i in range(n)],
            bias_mean=[arrays[f"bias_mean_{i}"] for i in range(n)],
            bias_log_std=[arrays[f"bias_log_std_{i}"] for i in range(n)],
        )
    if doc["kind"] == "mcdo":
        return MCDOParams(
            spec,
            weights=[arrays[f"weight_{i}"] for i in range(n)],
            biases=[arrays[f"bias_{i}"] for i in range(n)],
            dropout_rate=doc["dropout_rate"],
            drop_inputs=doc["drop_inputs"],
        )
    raise ValueError(f"unknown parameter kind {doc['kind']!r}")
