import math
from types import SimpleNamespace

import numpy as np
import pytest
from scipy import stats

from bnnuq.hmc import (HmcConfig, ZeroAcceptanceError, bnn_potential,
                       hmc_core, hmc_sample, leapfrog)
from bnnuq.networks import NetworkSpec, PriorConfig
from bnnuq.objectives import Likelihood
from bnnuq.rng import RngStream


def _std_normal_potential(q):
    return 0.5 * float(q @ q), q.copy()


def _batch_means_se(chain: np.ndarray, n_batches: int = 100) -> float:
    """Standard error of the chain mean via batch means (handles autocorr)."""
    usable = len(chain) - len(chain) % n_batches
    batches = chain[:usable].reshape(n_batches, -1).mean(axis=1)
    return float(batches.std(ddof=1) / math.sqrt(n_batches))


class TestLeapfrog:
    def test_energy_error_vanishes(self):
        # quadratic potential; L*eps fixed at 1.6
        gen = np.random.default_rng(0)
        q0 = gen.standard_normal(4)
        p0 = gen.standard_normal(4)

        def energy(q, p):
            return 0.5 * q @ q + 0.5 * p @ p

        errors = []
        for n_steps in (4, 16, 64, 256):
            eps = 1.6 / n_steps
            q, p = leapfrog(q0, p0, eps, n_steps, lambda q: q)
            errors.append(abs(energy(q, p) - energy(q0, p0)))
        assert errors[-1] < errors[0]
        assert errors[-1] < 1e-4

    def test_reversibility(self):
        gen = np.random.default_rng(1)
        q0 = gen.standard_normal(3)
        p0 = gen.standard_normal(3)
        q1, p1 = leapfrog(q0, p0, 0.1, 20, lambda q: q)
        q2, p2 = leapfrog(q1, -p1, 0.1, 20, lambda q: q)
        np.testing.assert_allclose(q2, q0, atol=1e-10)
        np.testing.assert_allclose(-p2, p0, atol=1e-10)


class TestHmcCore:
    def test_standard_normal_moments(self):
        # fixed step; L*eps ~ pi/2 makes consecutive draws nearly independent
        cfg = HmcConfig(step_size=0.15, leapfrog_steps=10, warmup=0,
                        samples=100_000)
        out = hmc_core(_std_normal_potential, np.zeros(3), cfg,
                       RngStream(42).generator())
        assert 0.5 < out.acceptance_rate <= 1.0
        for d in range(3):
            chain = out.samples[:, d]
            se = _batch_means_se(chain)
            assert abs(chain.mean()) < 4 * se
            sq = chain ** 2
            se2 = _batch_means_se(sq)
            assert abs(sq.mean() - 1.0) < 4 * se2

    def test_chi_squared_marginals(self):
        cfg = HmcConfig(step_size=0.15, leapfrog_steps=10, warmup=0,
                        samples=100_000)
        out = hmc_core(_std_normal_potential, np.zeros(1), cfg,
                       RngStream(7).generator())
        # thin to suppress residual autocorrelation before the iid test
        chain = out.samples[::5, 0]
        n_bins = 20
        edges = stats.norm.ppf(np.linspace(0, 1, n_bins + 1))
        counts, _ = np.histogram(chain, bins=edges)
        expected = len(chain) / n_bins
        chi2 = float(np.sum((counts - expected) ** 2 / expected))
        threshold = stats.chi2.ppf(0.99, n_bins - 1)
        assert chi2 < threshold

    def test_step_size_adapts_down(self):
        cfg = HmcConfig(step_size=10.0, leapfrog_steps=5, warmup=500,
                        samples=200)
        out = hmc_core(_std_normal_potential, np.zeros(2), cfg,
                       RngStream(3).generator())
        assert out.step_size < 10.0
        assert out.acceptance_rate > 0.3

    def test_zero_acceptance_raises(self):
        # enormous frozen step size on a narrow target rejects everything
        def narrow(q):
            return 5e5 * float(q @ q), 1e6 * q
        cfg = HmcConfig(step_size=10.0, leapfrog_steps=3, warmup=0, samples=50)
        with pytest.raises(ZeroAcceptanceError):
            hmc_core(narrow, np.zeros(2), cfg, RngStream(4).generator())


class TestBnnHmc:
    def test_no_data_unit_prior_is_standard_normal(self):
        # sigma_w = sqrt(fan_in) makes every weight prior std 1
        spec = NetworkSpec(1, (2,))
        prior = PriorConfig(1.0, 1.0)
        # fixed near-independence step; the BNN potential is what is tested
        data = SimpleNamespace(X=np.zeros((0, 1)), y=np.zeros(0))
        cfg = HmcConfig(step_size=0.15, leapfrog_steps=10, warmup=0,
                        samples=25_000)
        out = hmc_sample(spec, prior, data, Likelihood(0.1), cfg, RngStream(5))
        # first-layer weights have prior std sigma_w / sqrt(1) = 1
        chain = out.samples[:, 0]
        se = _batch_means_se(chain)
        assert abs(chain.mean()) < 4 * se
        sq = chain ** 2
        assert abs(sq.mean() - 1.0) < 4 * _batch_means_se(sq)

    def test_conjugate_linear_regression(self):
        # one neuron with frozen (u=1, v=0) on positive inputs acts as
        # f = w x + b: the posterior over (w, b) is Gaussian conjugate
        spec = NetworkSpec(1, (1,))
        prior = PriorConfig(1.0, 1.0)
        noise = 0.3
        gen = np.random.default_rng(8)
        x = gen.uniform(0.5, 2.0, (12, 1))
        y = 1.3 * x[:, 0] - 0.4 + noise * gen.standard_normal(12)
        data = SimpleNamespace(X=x, y=y)

        phi = np.column_stack([x[:, 0], np.ones(12)])
        prec = phi.T @ phi / noise ** 2 + np.eye(2)
        cov = np.linalg.inv(prec)
        mean = cov @ phi.T @ y / noise ** 2

        cfg = HmcConfig(step_size=0.05, leapfrog_steps=20, warmup=1000,
                        samples=25_000)
        out = hmc_sample(spec, prior, data, Likelihood(noise), cfg,
                         RngStream(6), frozen_input_layer=(np.array([[1.0]]),
                                                           np.array([0.0])))
        assert out.samples.shape[1] == 2
        for d, (target_mean, target_var) in enumerate(
                zip(mean, np.diag(cov))):
            chain = out.samples[:, d]
            se = _batch_means_se(chain)
            assert abs(chain.mean() - target_mean) < 4 * se + 1e-12
            centered = (chain - chain.mean()) ** 2
            se_v = _batch_means_se(centered)
            assert abs(centered.mean() - target_var) < 4 * se_v + 1e-12

    def test_potential_gradient_matches_fd(self):
        spec = NetworkSpec(2, (3,))
        prior = PriorConfig(2.0, 1.0)
        gen = np.random.default_rng(9)
        data = SimpleNamespace(X=gen.standard_normal((5, 2)),
                               y=gen.standard_normal(5))
        vag, dim, _ = bnn_potential(spec, prior, data, Likelihood(0.2))
        q = gen.standard_normal(dim)
        _, g = vag(q)
        h = 1e-6
        for idx in gen.choice(dim, 5, replace=False):
            e = np.zeros(dim)
            e[idx] = h
            fd = (vag(q + e)[0] - vag(q - e)[0]) / (2 * h)
            assert fd == pytest.approx(g[idx], rel=1e-5, abs=1e-8)
