"""Shared generators of random networks and probes for fuzz-style tests."""

import numpy as np

from bnnuq.bounds import LineProbe
from bnnuq.networks import FFGParams, MCDOParams, NetworkSpec


def random_ffg_1hl(gen: np.random.Generator, width: int = 50,
                   input_dim: int = 1, output_dim: int = 1) -> FFGParams:
    spec = NetworkSpec(input_dim, (width,), output_dim)
    scale = 1.0 / np.sqrt(width)
    return FFGParams(
        spec,
        weight_mean=[gen.standard_normal((width, input_dim)),
                     scale * gen.standard_normal((output_dim, width))],
        weight_log_std=[np.log(gen.uniform(0.05, 1.5, (width, input_dim))),
                        np.log(scale * gen.uniform(0.05, 1.0,
                                                   (output_dim, width)))],
        bias_mean=[gen.standard_normal(width),
                   gen.standard_normal(output_dim)],
        bias_log_std=[np.log(gen.uniform(0.05, 1.5, width)),
                      np.log(gen.uniform(0.05, 1.0, output_dim))],
    )


def random_mcdo_1hl(gen: np.random.Generator, width: int = 50,
                    input_dim: int = 1, output_dim: int = 1,
                    drop_inputs: bool = False,
                    dropout_rate: float | None = None) -> MCDOParams:
    spec = NetworkSpec(input_dim, (width,), output_dim)
    p = gen.uniform(0.05, 0.5) if dropout_rate is None else dropout_rate
    return MCDOParams(
        spec,
        weights=[gen.standard_normal((width, input_dim)),
                 gen.standard_normal((output_dim, width)) / np.sqrt(width)],
        biases=[gen.standard_normal(width), gen.standard_normal(output_dim)],
        dropout_rate=p,
        drop_inputs=drop_inputs,
    )


def random_mcdo_deep(gen: np.random.Generator, widths=(30, 30),
                     input_dim: int = 1, drop_inputs: bool = True,
                     dropout_rate: float = 0.2) -> MCDOParams:
    spec = NetworkSpec(input_dim, tuple(widths), 1)
    weights, biases = [], []
    for fan_in, fan_out in spec.layer_dims:
        weights.append(gen.standard_normal((fan_out, fan_in)) / np.sqrt(fan_in))
        biases.append(0.3 * gen.standard_normal(fan_out))
    return MCDOParams(spec, weights, biases, dropout_rate, drop_inputs)


def random_axis_probe(gen: np.random.Generator, input_dim: int,
                      grid_size: int = 21) -> LineProbe:
    """A random line with direction_d * offset_d = 0 in every coordinate."""
    while True:
        on_line = gen.random(input_dim) < 0.5
        if np.any(on_line):
            break
    direction = np.where(on_line, gen.standard_normal(input_dim), 0.0)
    offset = np.where(on_line, 0.0, 2.0 * gen.standard_normal(input_dim))
    hi = gen.uniform(0.5, 2.0)
    lo = -gen.uniform(0.5, 2.0)
    return LineProbe(direction, offset, lo, hi, grid_size)
