"""Loss-interpolation study: moment-matched start, annealed to the
variational objective.

2HL networks are first moment-matched to an exact GP reference, then the
training loss is annealed from the squared-moment loss to the variational
objective in alpha steps of 0.1, finishing with a pure variational phase.
Slice moments are emitted before and after annealing together with the GP
reference; the midpoint overconfidence ratio summarises the loss of
in-between uncertainty.
"""

from __future__ import annotations

import numpy as np

from ..data import SIGMA_W_TABLE, gen_two_cluster_2d
from ..networks import NetworkSpec, PriorConfig, init_params
from ..objectives import Likelihood
from ..optim import TrainConfig, train
from ..rng import RngStream
from .common import DEFAULT_DROPOUT, Emitter, ExperimentConfig
from . import methods
from .fig3 import NOISE_STD, SIGMA_B, slice_points

DEPTH = 2
ALPHAS = tuple(round(0.9 - 0.1 * i, 1) for i in range(10))  # 0.9 .. 0.0


def run(cfg: ExperimentConfig):
    emitter = Emitter(cfg)
    wanted = cfg.methods or ("mfvi", "mcdo")
    lam, slice_x = slice_points()
    sigma_w = SIGMA_W_TABLE[DEPTH]
    prior = PriorConfig(sigma_w, SIGMA_B)
    lik = Likelihood(NOISE_STD)
    moment_iters = cfg.iters(paper=50_000, desk=5_000)
    anneal_iters = cfg.iters(paper=10_000, desk=1_000)
    final_iters = cfg.iters(paper=100_000, desk=10_000)
    summary_rows = []
    for seed in cfg.scaled_seeds():
        data = gen_two_cluster_2d(seed, DEPTH)
        gp_model = methods.fit_gp(DEPTH, sigma_w, SIGMA_B, data, NOISE_STD)
        # reference moments on a grid covering data and the in-between region
        grid = np.linspace(-1.5, 1.5, 40)
        grid_x = np.column_stack([grid, grid])
        ref = methods.predict_gp(gp_model, grid_x)
        t_mean, t_var = ref
        gp_mean, gp_var = methods.predict_gp(gp_model, slice_x)
        emitter.write_csv(emitter.csv_name("gp", DEPTH, seed, "slice"),
                          ["lambda", "mean", "std"],
                          [lam, gp_mean, np.sqrt(gp_var)])
        spec = NetworkSpec(2, (cfg.scaled_width(),) * DEPTH)
        mid = slice_x.shape[0] // 2
        for family in wanted:
            if family == "mfvi":
                dist = init_params(spec, "prior", prior, RngStream(seed, 8))
            else:
                dist = init_params(spec, "mcdo-default", prior,
                                   RngStream(seed, 9),
                                   dropout_rate=DEFAULT_DROPOUT)
            tcfg = TrainConfig("moment-match", moment_iters, 1e-3, 128, seed)
            dist = train(spec, dist, tcfg, grid_x=grid_x, target_mean=t_mean,
                         target_var=t_var).dist
            pre_mean, pre_var = methods.predict_bnn(spec, dist, slice_x,
                                                    seed)
            emitter.write_csv(
                emitter.csv_name(family, DEPTH, seed, "pre"),
                ["lambda", "mean", "std"],
                [lam, pre_mean, np.sqrt(np.maximum(pre_var, 0.0))])
            for step, alpha in enumerate(ALPHAS):
                acfg = TrainConfig("interpolated", anneal_iters, 1e-3, 32,
                                   seed * 100 + step)
                dist = train(spec, dist, acfg, data=data, lik=lik,
                             prior=prior, grid_x=grid_x, target_mean=t_mean,
                             target_var=t_var, alpha=alpha).dist
            objective = "elbo" if family == "mfvi" else "mcdo"
            fcfg = TrainConfig(objective, final_iters, 1e-3, 32,
                               seed * 100 + 99)
            dist = train(spec, dist, fcfg, data=data, lik=lik,
                         prior=prior).dist
            post_mean, post_var = methods.predict_bnn(spec, dist, slice_x,
                                                      seed)
            emitter.write_csv(
                emitter.csv_name(family, DEPTH, seed, "post"),
                ["lambda", "mean", "std"],
                [lam, post_mean, np.sqrt(np.maximum(post_var, 0.0))])
            summary_rows.append(
                (seed, 0.0 if family == "mfvi" else 1.0,
                 np.sqrt(gp_var[mid] / pre_var[mid]),
                 np.sqrt(gp_var[mid] / post_var[mid])))
    cols = list(map(np.asarray, zip(*summary_rows)))
    emitter.write_csv("summary_2_0.csv",
                      ["seed", "is_mcdo", "gamma_mid_pre", "gamma_mid_post"],
                      cols)
    return emitter.finalize(alphas=list(ALPHAS), depth=DEPTH,
                            noise_std=NOISE_STD)
