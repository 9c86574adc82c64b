"""Uncertainty on the line joining two random clusters in 5-D input space."""

from __future__ import annotations

import math

import numpy as np

from ..data import gen_random_clusters
from ..networks import NetworkSpec, PriorConfig
from ..objectives import Likelihood
from .common import DEFAULT_DROPOUT, Emitter, ExperimentConfig
from . import methods

SIGMA_W, SIGMA_B = math.sqrt(2.0), 1.0
NOISE_STD = 0.01


def run(cfg: ExperimentConfig):
    emitter = Emitter(cfg)
    wanted = cfg.methods or ("gp", "mfvi", "mcdo")
    prior = PriorConfig(SIGMA_W, SIGMA_B)
    lik = Likelihood(NOISE_STD)
    for depth in cfg.depths:
        for seed in cfg.scaled_seeds():
            data, probe = gen_random_clusters(seed, depth=depth,
                                              sigma_w=SIGMA_W,
                                              sigma_b=SIGMA_B,
                                              noise_std=NOISE_STD)
            lam = probe.lambdas()
            line_x = probe.points(lam)
            spec = NetworkSpec(data.dim, (cfg.scaled_width(),) * depth)
            iters = cfg.iters(paper=100_000, desk=10_000)
            for method in wanted:
                if method == "gp":
                    model = methods.fit_gp(depth, SIGMA_W, SIGMA_B, data,
                                           NOISE_STD)
                    mean, var = methods.predict_gp(model, line_x)
                elif method == "mfvi":
                    dist = methods.fit_mfvi(spec, data, prior, lik, iters,
                                            seed)
                    mean, var = methods.predict_bnn(spec, dist, line_x, seed)
                else:
                    dist = methods.fit_mcdo(spec, data, prior, lik, iters,
                                            seed, DEFAULT_DROPOUT)
                    mean, var = methods.predict_bnn(spec, dist, line_x, seed)
                emitter.write_csv(
                    emitter.csv_name(method, depth, seed, "slice"),
                    ["lambda", "mean", "std"],
                    [lam, mean, np.sqrt(np.maximum(var, 0.0))])
            # projection of the data onto the probe line for plotting
            rel = data.X - probe.offset
            proj = rel @ probe.direction / (probe.direction @ probe.direction)
            emitter.write_csv(
                emitter.csv_name("data", depth, seed),
                ["lambda_projected", "y"], [proj, data.y])
    return emitter.finalize(noise_std=NOISE_STD, sigma_w=SIGMA_W,
                            dropout_rate=DEFAULT_DROPOUT)
