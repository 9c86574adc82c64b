"""Inference-method wrappers shared by the experiment drivers."""

from __future__ import annotations

import numpy as np

from ..data import Dataset
from ..gp import GPModel, NngpKernelConfig, gp_fit, gp_predict
from ..hmc import BnnHmcResult, HmcConfig, hmc_sample
from ..networks import (FFGParams, MCDOParams, NetworkSpec, PriorConfig,
                        init_params, predictive_mc)
from ..objectives import Likelihood
from ..optim import TrainConfig, train
from ..rng import RngStream

TEST_MC_SAMPLES = 500     # posterior-predictive draws at evaluation time
TRAIN_MC_SAMPLES = 32     # objective draws per training iteration


def fit_mfvi(spec: NetworkSpec, data: Dataset, prior: PriorConfig,
             lik: Likelihood, iterations: int, seed: int,
             learning_rate: float = 1e-3) -> FFGParams:
    q0 = init_params(spec, "mfvi-default", prior, RngStream(seed, 1))
    cfg = TrainConfig("elbo", iterations, learning_rate, TRAIN_MC_SAMPLES,
                      seed)
    return train(spec, q0, cfg, data=data, lik=lik, prior=prior).dist


def fit_mcdo(spec: NetworkSpec, data: Dataset, prior: PriorConfig,
             lik: Likelihood, iterations: int, seed: int,
             dropout_rate: float = 0.05,
             learning_rate: float = 1e-3) -> MCDOParams:
    d0 = init_params(spec, "mcdo-default", prior, RngStream(seed, 2),
                     dropout_rate=dropout_rate)
    cfg = TrainConfig("mcdo", iterations, learning_rate, TRAIN_MC_SAMPLES,
                      seed)
    return train(spec, d0, cfg, data=data, lik=lik, prior=prior).dist


def predict_bnn(spec: NetworkSpec, dist, x: np.ndarray, seed: int,
                n_samples: int = TEST_MC_SAMPLES):
    m = predictive_mc(spec, dist, x, n_samples, RngStream(seed, 3))
    return np.asarray(m.mean)[:, 0], np.asarray(m.variance)[:, 0]


def fit_gp(depth: int, sigma_w: float, sigma_b: float, data: Dataset,
           noise_std: float) -> GPModel:
    cfg = NngpKernelConfig(depth, sigma_w, sigma_b, data.dim)
    return gp_fit(cfg, data, noise_std)


def predict_gp(model: GPModel, x: np.ndarray):
    m = gp_predict(model, x)
    return np.asarray(m.mean), np.asarray(m.variance)


def run_hmc(spec: NetworkSpec, data: Dataset, prior: PriorConfig,
            lik: Likelihood, samples: int, warmup: int,
            seed: int, step_size: float = 2e-3,
            leapfrog_steps: int = 30) -> BnnHmcResult:
    cfg = HmcConfig(step_size, leapfrog_steps, warmup, samples)
    return hmc_sample(spec, prior, data, lik, cfg, RngStream(seed, 4))


def predict_hmc(result: BnnHmcResult, x: np.ndarray,
                max_draws: int = TEST_MC_SAMPLES):
    mean, var = result.predict(x, max_draws=max_draws)
    return mean[:, 0], var[:, 0]
