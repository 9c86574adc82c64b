"""Overconfidence-ratio boxplots across network depths.

For each depth and method the ratio gamma(x) = sqrt(Var_GP / Var_method) is
evaluated at 300 evenly spaced points on the diagonal slice and summarised
as boxplot statistics (min, quartiles, median, max).
"""

from __future__ import annotations

import numpy as np

from ..bounds import overconfidence_ratio
from ..data import SIGMA_W_TABLE, gen_two_cluster_2d
from .common import Emitter, ExperimentConfig, boxplot_stats
from . import methods
from .fig3 import NOISE_STD, SIGMA_B, fit_and_predict, slice_points

BOX_HEADER = ["whisker_lo", "q1", "median", "q3", "whisker_hi", "n"]


def gamma_stats(gp_var: np.ndarray, method_var: np.ndarray) -> dict:
    return boxplot_stats(overconfidence_ratio(gp_var, method_var))


def run(cfg: ExperimentConfig):
    emitter = Emitter(cfg)
    wanted = cfg.methods or ("gp", "mfvi", "mcdo")
    _, slice_x = slice_points()
    failures = {}
    for depth in cfg.depths:
        for seed in cfg.scaled_seeds():
            data = gen_two_cluster_2d(seed, depth)
            gp_model = methods.fit_gp(depth, SIGMA_W_TABLE[depth], SIGMA_B,
                                      data, NOISE_STD)
            _, gp_var = methods.predict_gp(gp_model, slice_x)
            for method in wanted:
                if method == "hmc" and depth > 2:
                    continue
                try:
                    if method == "gp":
                        var = gp_var
                    else:
                        _, var = fit_and_predict(method, cfg, depth, seed,
                                                 data, slice_x,
                                                 desk_iters=10_000)
                except Exception as err:
                    failures[f"{method}_{depth}_{seed}"] = repr(err)
                    continue
                stats = gamma_stats(gp_var, var)
                emitter.write_csv(
                    emitter.csv_name(method, depth, seed),
                    BOX_HEADER, [np.array([stats[k]]) for k in BOX_HEADER])
    return emitter.finalize(slice_points=slice_x.shape[0], failures=failures)
