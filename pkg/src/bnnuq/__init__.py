"""Predictive-uncertainty analysis for approximate-inference ReLU BNNs."""

from .moments import (GaussianMoments, relu_gaussian_mean,
                      relu_gaussian_second_moment, relu_gaussian_var,
                      std_normal_cdf, std_normal_pdf)
from .networks import (FFGParams, MCDOParams, NetworkSpec, PriorConfig,
                       closed_form_1hl_moments, closed_form_1hl_moments_mcdo,
                       forward, init_params, predictive_mc, sample_params)
from .rng import RngStream

__all__ = [
    "GaussianMoments", "RngStream", "NetworkSpec", "PriorConfig",
    "FFGParams", "MCDOParams", "forward", "sample_params", "predictive_mc",
    "closed_form_1hl_moments", "closed_form_1hl_moments_mcdo", "init_params",
    "relu_gaussian_mean", "relu_gaussian_var", "relu_gaussian_second_moment",
    "std_normal_cdf", "std_normal_pdf",
]
