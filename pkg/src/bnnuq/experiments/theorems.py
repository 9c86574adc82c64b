"""Randomised verification of every variance bound, emitted as reports."""

from __future__ import annotations

import json

import numpy as np

from ..bounds import (check_convexity_mcdo, check_deep_dropout_prop,
                      check_hypercube, check_thm1, check_thm5_convex_hull)
from ..networks import FFGParams, MCDOParams, NetworkSpec
from ..rng import RngStream
from .common import Emitter, ExperimentConfig


def random_ffg(gen, width, input_dim):
    spec = NetworkSpec(input_dim, (width,))
    scale = 1.0 / np.sqrt(width)
    return FFGParams(
        spec,
        weight_mean=[gen.standard_normal((width, input_dim)),
                     scale * gen.standard_normal((1, width))],
        weight_log_std=[np.log(gen.uniform(0.05, 1.5, (width, input_dim))),
                        np.log(scale * gen.uniform(0.05, 1.0, (1, width)))],
        bias_mean=[gen.standard_normal(width), gen.standard_normal(1)],
        bias_log_std=[np.log(gen.uniform(0.05, 1.5, width)),
                      np.log(gen.uniform(0.05, 1.0, 1))],
    )


def random_mcdo(gen, width, input_dim, drop_inputs=False):
    spec = NetworkSpec(input_dim, (width,))
    return MCDOParams(
        spec,
        weights=[gen.standard_normal((width, input_dim)),
                 gen.standard_normal((1, width)) / np.sqrt(width)],
        biases=[gen.standard_normal(width), gen.standard_normal(1)],
        dropout_rate=float(gen.uniform(0.05, 0.5)),
        drop_inputs=drop_inputs,
    )


def random_probe(gen, input_dim, grid_size=21):
    from ..bounds import LineProbe
    while True:
        on_line = gen.random(input_dim) < 0.5
        if np.any(on_line):
            break
    direction = np.where(on_line, gen.standard_normal(input_dim), 0.0)
    offset = np.where(on_line, 0.0, 2.0 * gen.standard_normal(input_dim))
    return LineProbe(direction, offset, -float(gen.uniform(0.5, 2.0)),
                     float(gen.uniform(0.5, 2.0)), grid_size)


def run(cfg: ExperimentConfig, n_nets: int = 1000, mc_samples: int = 200_000):
    emitter = Emitter(cfg)
    if cfg.smoke:
        n_nets, mc_samples = max(10, n_nets // 100), mc_samples // 10
    gen = RngStream(cfg.scaled_seeds()[0], 108).generator()
    width = cfg.scaled_width()
    reports = {}

    worst = None
    for _ in range(n_nets):
        d = int(gen.integers(1, 4))
        q = random_ffg(gen, width, d)
        rpt = check_thm1(q.spec, q, random_probe(gen, d))
        if worst is None or rpt.max_violation > worst.max_violation:
            worst = rpt
    reports["ffg_line_bound"] = worst

    worst = None
    for _ in range(n_nets // 10):
        dim = 2 if gen.random() < 0.5 else 3
        q = random_ffg(gen, width, dim)
        half = float(gen.uniform(0.3, 2.0))
        pts = gen.uniform(-half, half, (20, dim))
        rpt = check_hypercube(q.spec, q, half, pts)
        if worst is None or rpt.max_violation > worst.max_violation:
            worst = rpt
    reports["ffg_hypercube"] = worst

    worst = None
    ts = np.linspace(0.05, 0.95, 9)
    for _ in range(n_nets):
        d = int(gen.integers(1, 4))
        net = random_mcdo(gen, width, d)
        rpt = check_convexity_mcdo(net.spec, net, 2 * gen.standard_normal(d),
                                   2 * gen.standard_normal(d), ts)
        if worst is None or rpt.max_violation > worst.max_violation:
            worst = rpt
    reports["mcdo_convexity"] = worst

    vertices = np.array([[-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]])
    worst = None
    for trial in range(max(2, n_nets // 100)):
        net = random_mcdo(gen, width, 2, drop_inputs=True)
        rpt = check_thm5_convex_hull(net.spec, net, vertices, mc_samples,
                                     RngStream(trial, 109))
        if worst is None or rpt.max_violation - rpt.tolerance > \
                worst.max_violation - worst.tolerance:
            worst = rpt
    reports["mcdo_hull_bound"] = worst

    worst = None
    for trial in range(max(2, n_nets // 100)):
        spec = NetworkSpec(1, (width // 2, width // 2))
        weights = [gen.standard_normal((fo, fi)) / np.sqrt(fi)
                   for fi, fo in spec.layer_dims]
        biases = [0.3 * gen.standard_normal(fo) for _, fo in spec.layer_dims]
        net = MCDOParams(spec, weights, biases, 0.25, True)
        rpt = check_deep_dropout_prop(net.spec, net, np.array([-1.0]),
                                      np.array([1.0]), mc_samples,
                                      RngStream(trial, 110))
        if worst is None or rpt.max_violation - rpt.tolerance > \
                worst.max_violation - worst.tolerance:
            worst = rpt
    reports["mcdo_mean_gap"] = worst

    for name, rpt in reports.items():
        emitter.write_text(f"{name}.json", rpt.to_json())
    all_passed = all(r.passed for r in reports.values())
    emitter.finalize(n_nets=n_nets, mc_samples=mc_samples,
                     all_passed=all_passed)
    return reports
