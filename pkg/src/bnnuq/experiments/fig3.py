"""Two-cluster 2D regression: uncertainty heatmaps and the diagonal slice.

Each method produces a grid CSV (x1, x2, mean, std) over [-2, 2]^2 and a
slice CSV (lambda, x1, x2, mean, std) along the diagonal from (-1.2, -1.2)
to (1.2, 1.2) with 300 evenly spaced points.
"""

from __future__ import annotations

import numpy as np

from ..data import SIGMA_W_TABLE, gen_two_cluster_2d
from ..networks import NetworkSpec, PriorConfig
from ..objectives import Likelihood
from .common import DEFAULT_DROPOUT, Emitter, ExperimentConfig
from . import methods

NOISE_STD = 0.1
SIGMA_B = 1.0
SLICE_POINTS = 300
GRID_RES = 100
GRID_LIM = 2.0


def slice_points(n: int = SLICE_POINTS) -> tuple[np.ndarray, np.ndarray]:
    lam = np.linspace(-1.2, 1.2, n)
    return lam, np.column_stack([lam, lam])


def eval_grid(res: int = GRID_RES, lim: float = GRID_LIM) -> np.ndarray:
    axis = np.linspace(-lim, lim, res)
    xx, yy = np.meshgrid(axis, axis, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel()])


def fit_and_predict(method: str, cfg: ExperimentConfig, depth: int,
                    seed: int, data, eval_x: np.ndarray,
                    desk_iters: int = 20_000):
    """(mean, var) of one method at the evaluation points."""
    sigma_w = SIGMA_W_TABLE[depth]
    prior = PriorConfig(sigma_w, SIGMA_B)
    lik = Likelihood(NOISE_STD)
    spec = NetworkSpec(2, (cfg.scaled_width(),) * depth)
    if method == "gp":
        model = methods.fit_gp(depth, sigma_w, SIGMA_B, data, NOISE_STD)
        return methods.predict_gp(model, eval_x)
    if method == "mfvi":
        iters = cfg.iters(paper=100_000, desk=desk_iters)
        dist = methods.fit_mfvi(spec, data, prior, lik, iters, seed)
        return methods.predict_bnn(spec, dist, eval_x, seed)
    if method == "mcdo":
        iters = cfg.iters(paper=100_000, desk=desk_iters)
        dist = methods.fit_mcdo(spec, data, prior, lik, iters, seed,
                                DEFAULT_DROPOUT)
        return methods.predict_bnn(spec, dist, eval_x, seed)
    if method == "hmc":
        if depth > 2:
            raise ValueError("hmc restricted to depths 1-2")
        samples = cfg.iters(paper=250_000, desk=20_000)
        warmup = cfg.iters(paper=10_000, desk=2_000)
        result = methods.run_hmc(spec, data, prior, lik, samples, warmup,
                                 seed)
        return methods.predict_hmc(result, eval_x)
    raise ValueError(f"unknown method {method!r}")


def run(cfg: ExperimentConfig):
    emitter = Emitter(cfg)
    wanted = cfg.methods or ("gp", "mfvi", "mcdo", "hmc")
    lam, slice_x = slice_points()
    grid_res = max(10, GRID_RES // 4) if cfg.smoke else GRID_RES
    grid_x = eval_grid(grid_res)
    failures = {}
    for depth in cfg.depths:
        for seed in cfg.scaled_seeds():
            data = gen_two_cluster_2d(seed, depth)
            for method in wanted:
                if method == "hmc" and depth > 2:
                    continue
                try:
                    eval_x = np.vstack([grid_x, slice_x])
                    mean, var = fit_and_predict(method, cfg, depth, seed,
                                                data, eval_x)
                except Exception as err:  # per-method failure, run continues
                    failures[f"{method}_{depth}_{seed}"] = repr(err)
                    continue
                std = np.sqrt(np.maximum(var, 0.0))
                n_grid = grid_x.shape[0]
                emitter.write_csv(
                    emitter.csv_name(method, depth, seed, "grid"),
                    ["x1", "x2", "mean", "std"],
                    [grid_x[:, 0], grid_x[:, 1], mean[:n_grid],
                     std[:n_grid]])
                emitter.write_csv(
                    emitter.csv_name(method, depth, seed, "slice"),
                    ["lambda", "x1", "x2", "mean", "std"],
                    [lam, slice_x[:, 0], slice_x[:, 1], mean[n_grid:],
                     std[n_grid:]])
            emitter.write_csv(
                emitter.csv_name("data", depth, seed),
                ["x1", "x2", "y"], [data.X[:, 0], data.X[:, 1], data.y])
    return emitter.finalize(noise_std=NOISE_STD, sigma_b=SIGMA_B,
                            grid_res=grid_res, failures=failures)
