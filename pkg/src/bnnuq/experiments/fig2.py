"""Direct function-space moment matching for 1HL networks.

Both families are trained to minimise the squared error between their
output moments and target moments carrying in-between uncertainty, then
evaluated in closed form together with their structural bound lines
(endpoint-sum for the factorised Gaussian, endpoint chord for dropout).
"""

from __future__ import annotations

import math

import numpy as np

from ..data import gen_two_cluster_2d  # noqa: F401  (sibling generators)
from ..data import Dataset
from ..gp import NngpKernelConfig, gp_fit, gp_predict
from ..networks import (NetworkSpec, PriorConfig, closed_form_1hl_moments,
                        closed_form_1hl_moments_mcdo, init_params)
from ..optim import TrainConfig, train
from ..rng import RngStream
from .common import DEFAULT_DROPOUT, Emitter, ExperimentConfig

GRID_N = 40
GRID_LIM = 1.5
NOISE_STD = 0.1
SIGMA_W, SIGMA_B = math.sqrt(2.0), 1.0
MOMENT_MC_SAMPLES = 128
BOUND_ANCHORS = (-1.0, 1.0)


def target_moments(seed: int = 0):
    """Reference moments on the grid: a GP fit to two separated 1D clusters.

    The posterior variance has low values at the clusters (at -1 and 1) and
    an in-between bump at the origin.
    """
    gen = RngStream(seed, 104).generator()
    x = np.concatenate([
        -1.0 + 0.1 * gen.standard_normal(25),
        1.0 + 0.1 * gen.standard_normal(25)])[:, None]
    cfg = NngpKernelConfig(1, SIGMA_W, SIGMA_B, 1)
    from ..linalg import cholesky_factor
    from ..gp import nngp_gram
    gram = nngp_gram(cfg, x)
    lower, _ = cholesky_factor(gram)
    y = lower @ gen.standard_normal(50) + NOISE_STD * gen.standard_normal(50)
    model = gp_fit(cfg, (x, y), NOISE_STD)
    grid = np.linspace(-GRID_LIM, GRID_LIM, GRID_N)[:, None]
    ref = gp_predict(model, grid)
    return grid, np.asarray(ref.mean), np.asarray(ref.variance)


def fit_family(family: str, cfg: ExperimentConfig, seed: int, grid,
               t_mean, t_var):
    spec = NetworkSpec(1, (cfg.scaled_width(),))
    prior = PriorConfig(SIGMA_W, SIGMA_B)
    iters = cfg.iters(paper=50_000, desk=10_000)
    tcfg = TrainConfig("moment-match", iters, 1e-3, MOMENT_MC_SAMPLES, seed)
    if family == "ffg":
        d0 = init_params(spec, "prior", prior, RngStream(seed, 5))
    else:
        d0 = init_params(spec, "mcdo-default", prior, RngStream(seed, 6),
                         dropout_rate=DEFAULT_DROPOUT)
    result = train(spec, d0, tcfg, grid_x=grid, target_mean=t_mean,
                   target_var=t_var)
    return spec, result.dist


def closed_moments(spec, dist, x):
    if hasattr(dist, "dropout_rate"):
        m = closed_form_1hl_moments_mcdo(spec, dist, x)
    else:
        m = closed_form_1hl_moments(spec, dist, x)
    return np.asarray(m.mean)[:, 0], np.asarray(m.variance)[:, 0]


def bound_line(family: str, spec, dist, grid_x: np.ndarray) -> np.ndarray:
    """Structural bound along the grid, anchored at x = -1 and x = 1.

    FFG: constant Var(-1) + Var(1), valid on [-1, 1] (NaN outside).
    MCDO: the convexity chord between the endpoint variances.
    """
    anchors = np.asarray(BOUND_ANCHORS)[:, None]
    _, v = closed_moments(spec, dist, anchors)
    lam = grid_x[:, 0]
    inside = (lam >= BOUND_ANCHORS[0]) & (lam <= BOUND_ANCHORS[1])
    out = np.full(lam.shape, np.nan)
    if family == "ffg":
        out[inside] = v[0] + v[1]
    else:
        t = (lam[inside] - BOUND_ANCHORS[0]) / (BOUND_ANCHORS[1]
                                                - BOUND_ANCHORS[0])
        out[inside] = (1 - t) * v[0] + t * v[1]
    return out


def run(cfg: ExperimentConfig):
    emitter = Emitter(cfg)
    wanted = cfg.methods or ("ffg", "mcdo")
    for seed in cfg.scaled_seeds():
        grid, t_mean, t_var = target_moments(seed)
        for family in wanted:
            spec, dist = fit_family(family, cfg, seed, grid, t_mean, t_var)
            f_mean, f_var = closed_moments(spec, dist, grid)
            emitter.write_csv(
                emitter.csv_name(family, 1, seed),
                ["x", "target_mean", "target_var", "fitted_mean",
                 "fitted_var", "bound"],
                [grid[:, 0], t_mean, t_var, f_mean, f_var,
                 bound_line(family, spec, dist, grid)])
    return emitter.finalize(grid_n=GRID_N, noise_std=NOISE_STD,
                            dropout_rate=DEFAULT_DROPOUT,
                            moment_mc_samples=MOMENT_MC_SAMPLES)
