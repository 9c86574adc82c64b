import math
from types import SimpleNamespace

import numpy as np
import pytest
import torch
from scipy.integrate import quad

from bnnuq import tnets
from bnnuq.networks import (FFGParams, NetworkSpec, PriorConfig, forward,
                            init_params)
from bnnuq.objectives import (Likelihood, elbo, gaussian_kl,
                              interpolated_loss, mcdo_objective, mcdo_penalty,
                              moment_match_loss, grad)
from bnnuq.rng import RngStream
from helpers import random_ffg_1hl, random_mcdo_1hl


def _kl_quadrature(mu, sigma, s):
    """Numerical KL( N(mu, sigma^2) || N(0, s^2) ) by 1D quadrature."""
    def integrand(x):
        logq = -0.5 * ((x - mu) / sigma) ** 2 - math.log(sigma) \
            - 0.5 * math.log(2 * math.pi)
        logp = -0.5 * (x / s) ** 2 - math.log(s) - 0.5 * math.log(2 * math.pi)
        return math.exp(logq) * (logq - logp)
    lo, hi = mu - 12 * sigma, mu + 12 * sigma
    val, _ = quad(integrand, lo, hi, limit=200)
    return val


class TestGaussianKl:
    def test_zero_at_prior(self):
        spec = NetworkSpec(2, (4,))
        prior = PriorConfig(1.5, 0.7)
        q = init_params(spec, "prior", prior, RngStream(0))
        assert gaussian_kl(q, prior) == pytest.approx(0.0, abs=1e-12)

    def test_single_weight_half(self):
        # mu=1, sigma=s=1: KL = mu^2/2 = 0.5 for that weight
        spec = NetworkSpec(1, (1,))
        prior = PriorConfig(1.0, 1.0)
        q = init_params(spec, "prior", prior, RngStream(0))
        wm = [a.copy() for a in q.weight_mean]
        wm[0][0, 0] = 1.0
        q = FFGParams(spec, wm, q.weight_log_std, q.bias_mean, q.bias_log_std)
        assert gaussian_kl(q, prior) == pytest.approx(0.5, abs=1e-12)

    def test_matches_quadrature_oracle(self):
        gen = np.random.default_rng(3)
        spec = NetworkSpec(1, (2,))
        prior = PriorConfig(1.3, 0.9)
        q = random_ffg_1hl(gen, width=2, input_dim=1)
        expected = 0.0
        for (fan_in, _), mu_w, sd_w, mu_b, sd_b in zip(
                spec.layer_dims, q.weight_mean, q.weight_std,
                q.bias_mean, q.bias_std):
            s_w = prior.weight_std(fan_in)
            for mu, sd in zip(mu_w.ravel(), sd_w.ravel()):
                expected += _kl_quadrature(mu, sd, s_w)
            for mu, sd in zip(mu_b.ravel(), sd_b.ravel()):
                expected += _kl_quadrature(mu, sd, prior.sigma_b)
        assert gaussian_kl(q, prior) == pytest.approx(expected, abs=1e-6)

    def test_non_negative(self):
        gen = np.random.default_rng(4)
        prior = PriorConfig(2.0, 1.0)
        for _ in range(20):
            q = random_ffg_1hl(gen, width=3, input_dim=2)
            assert gaussian_kl(q, prior) >= 0.0


class TestElbo:
    SPEC = NetworkSpec(1, (3,))
    PRIOR = PriorConfig(1.0, 1.0)
    LIK = Likelihood(0.1)

    def _data(self, n):
        gen = np.random.default_rng(0)
        return SimpleNamespace(X=gen.standard_normal((n, 1)),
                               y=gen.standard_normal(n))

    def test_empty_dataset_is_minus_kl(self):
        gen = np.random.default_rng(1)
        q = random_ffg_1hl(gen, width=3, input_dim=1)
        data = SimpleNamespace(X=np.zeros((0, 1)), y=np.zeros(0))
        val = elbo(self.SPEC, q, data, self.LIK, self.PRIOR, 8, RngStream(2))
        assert val == pytest.approx(-gaussian_kl(q, self.PRIOR), rel=1e-12)

    def test_degenerate_q_matches_pointwise_loglik(self):
        gen = np.random.default_rng(2)
        q = random_ffg_1hl(gen, width=3, input_dim=1)
        tiny = np.log(1e-13)
        q = FFGParams(self.SPEC, q.weight_mean,
                      [np.full_like(a, tiny) for a in q.weight_log_std],
                      q.bias_mean,
                      [np.full_like(a, tiny) for a in q.bias_log_std])
        data = self._data(6)
        theta = list(zip(q.weight_mean, q.bias_mean))
        f = forward(self.SPEC, theta, data.X)[:, 0]
        loglik = float(np.sum(
            -0.5 * ((data.y - f) / self.LIK.noise_std) ** 2
            - math.log(self.LIK.noise_std) - 0.5 * math.log(2 * math.pi)))
        expected = loglik - gaussian_kl(q, self.PRIOR)
        got = elbo(self.SPEC, q, data, self.LIK, self.PRIOR, 64, RngStream(3))
        assert got == pytest.approx(expected, rel=1e-6)

    def test_estimator_mean_invariant_to_samples(self):
        gen = np.random.default_rng(5)
        q = random_ffg_1hl(gen, width=3, input_dim=1)
        data = self._data(4)
        reps = 1000
        vals_s1 = np.array([
            elbo(self.SPEC, q, data, self.LIK, self.PRIOR, 1, RngStream(10, i))
            for i in range(reps)])
        vals_s32 = np.array([
            elbo(self.SPEC, q, data, self.LIK, self.PRIOR, 32,
                 RngStream(11, i)) for i in range(reps)])
        se = math.hypot(vals_s1.std(ddof=1) / math.sqrt(reps),
                        vals_s32.std(ddof=1) / math.sqrt(reps))
        assert abs(vals_s1.mean() - vals_s32.mean()) < 4 * se


class TestMcdoObjective:
    PRIOR = PriorConfig(2.0, 1.0)
    LIK = Likelihood(0.1)

    def test_zero_weights_zero_data_penalty(self):
        spec = NetworkSpec(2, (3,))
        d = random_mcdo_1hl(np.random.default_rng(0), width=3, input_dim=2)
        zeroed = type(d)(spec, [np.zeros_like(w) for w in d.weights],
                         [np.zeros_like(b) for b in d.biases],
                         d.dropout_rate, False)
        data = SimpleNamespace(X=np.zeros((0, 2)), y=np.zeros(0))
        val = mcdo_objective(spec, zeroed, data, self.LIK, self.PRIOR, 4,
                             RngStream(0))
        assert val == pytest.approx(0.0, abs=1e-12)

    def test_penalty_hand_formula(self):
        gen = np.random.default_rng(1)
        d = random_mcdo_1hl(gen, width=4, input_dim=2, dropout_rate=0.3)
        s_w0 = self.PRIOR.weight_std(2)
        s_w1 = self.PRIOR.weight_std(4)
        expected = (1 - 0.3) / (2 * s_w0 ** 2) * np.sum(d.weights[0] ** 2) \
            + (1 - 0.3) / (2 * s_w1 ** 2) * np.sum(d.weights[1] ** 2) \
            + np.sum(d.biases[0] ** 2) / 2 + np.sum(d.biases[1] ** 2) / 2
        assert mcdo_penalty(d, self.PRIOR) == pytest.approx(expected, rel=1e-12)

    def test_small_p_deterministic_nll(self):
        gen = np.random.default_rng(2)
        d = random_mcdo_1hl(gen, width=4, input_dim=1, dropout_rate=1e-12)
        data = SimpleNamespace(X=gen.standard_normal((5, 1)),
                               y=gen.standard_normal(5))
        f = forward(d.spec, list(zip(d.weights, d.biases)), data.X)[:, 0]
        nll = float(np.sum(0.5 * ((data.y - f) / 0.1) ** 2
                           + math.log(0.1) + 0.5 * math.log(2 * math.pi)))
        expected = nll + mcdo_penalty(d, self.PRIOR)
        got = mcdo_objective(d.spec, d, data, self.LIK, self.PRIOR, 1,
                             RngStream(1))
        assert got == pytest.approx(expected, rel=1e-9)


class TestMomentMatchLoss:
    def test_matches_manual_assembly(self):
        gen = np.random.default_rng(3)
        q = random_ffg_1hl(gen, width=4, input_dim=1)
        grid = np.linspace(-1, 1, 5)[:, None]
        t_mean = np.zeros(5)
        t_var = np.ones(5)
        rng = RngStream(77)
        got = moment_match_loss(q.spec, q, grid, t_mean, t_var, 64, rng)
        tq = tnets.lift(q)
        noise = tnets.draw_ffg_weight_noise(tq, 64, rng.generator())
        with torch.no_grad():
            f = tnets.ffg_sample_forward(tq, torch.tensor(grid), noise)
        mean = f.mean(dim=0).squeeze(-1).numpy()
        var = f.var(dim=0, unbiased=True).squeeze(-1).numpy()
        expected = np.sum((mean - t_mean) ** 2) + np.sum((var - t_var) ** 2)
        assert got == pytest.approx(expected, rel=1e-12)

    def test_vanishes_when_targets_are_true_moments(self):
        from bnnuq.networks import closed_form_1hl_moments
        gen = np.random.default_rng(4)
        q = random_ffg_1hl(gen, width=10, input_dim=1)
        grid = np.linspace(-1, 1, 7)[:, None]
        m = closed_form_1hl_moments(q.spec, q, grid)
        losses = [moment_match_loss(q.spec, q, grid,
                                    np.asarray(m.mean)[:, 0],
                                    np.asarray(m.variance)[:, 0], s,
                                    RngStream(5))
                  for s in (64, 4096, 65536)]
        assert losses[2] < losses[0]
        assert losses[2] < 0.05 * losses[0] + 1e-9

    def test_empty_grid_rejected(self):
        gen = np.random.default_rng(5)
        q = random_ffg_1hl(gen, width=2, input_dim=1)
        with pytest.raises(ValueError):
            moment_match_loss(q.spec, q, np.zeros((0, 1)), np.zeros(0),
                              np.zeros(0), 8, RngStream(0))


class TestInterpolatedLoss:
    def test_endpoints_and_mixture(self):
        assert interpolated_loss(3.0, 5.0, 1.0) == 3.0
        assert interpolated_loss(3.0, 5.0, 0.0) == 5.0
        assert interpolated_loss(3.0, 5.0, 0.9) == pytest.approx(0.9 * 3 + 0.1 * 5)

    def test_alpha_range(self):
        with pytest.raises(ValueError):
            interpolated_loss(1.0, 1.0, 1.5)


def _fd_check(loss_fn, leaves, gen, n_coords=20, h=1e-5, rel_tol=1e-4):
    """Central-difference check of autograd gradients on random coordinates."""
    value, grads = grad(loss_fn, leaves)
    flat_grads = np.concatenate([g.ravel() for g in grads])
    sizes = [int(np.prod(p.shape)) for p in leaves]
    total = sum(sizes)
    coords = gen.choice(total, size=min(n_coords, total), replace=False)
    for c in coords:
        acc, idx = 0, 0
        while c >= acc + sizes[idx]:
            acc += sizes[idx]
            idx += 1
        local = np.unravel_index(c - acc, leaves[idx].shape)
        with torch.no_grad():
            orig = float(leaves[idx][local])
            leaves[idx][local] = orig + h
        up = float(loss_fn())
        with torch.no_grad():
            leaves[idx][local] = orig - h
        down = float(loss_fn())
        with torch.no_grad():
            leaves[idx][local] = orig
        fd = (up - down) / (2 * h)
        denom = max(abs(fd), abs(flat_grads[c]), 1e-6)
        assert abs(fd - flat_grads[c]) / denom < rel_tol, \
            f"coord {c}: autograd {flat_grads[c]:.8g} vs fd {fd:.8g}"


class TestGradFiniteDifferences:
    PRIOR = PriorConfig(1.5, 1.0)
    LIK = Likelihood(0.2)

    def test_constant_objective_zero_grad(self):
        gen = np.random.default_rng(0)
        q = random_ffg_1hl(gen, width=2, input_dim=1)
        tq = tnets.lift(q)
        _, grads = grad(lambda: torch.zeros(()) + 1.0, tq.parameters())
        assert all(np.all(g == 0) for g in grads)

    def test_linear_objective(self):
        gen = np.random.default_rng(1)
        q = random_ffg_1hl(gen, width=2, input_dim=1)
        tq = tnets.lift(q)
        leaves = tq.parameters()
        c = [torch.tensor(gen.standard_normal(p.shape)) for p in leaves]
        _, grads = grad(
            lambda: sum((ci * p).sum() for ci, p in zip(c, leaves)), leaves)
        for ci, g in zip(c, grads):
            np.testing.assert_allclose(g, ci.numpy(), atol=1e-12)

    def test_non_finite_loss_raises(self):
        gen = np.random.default_rng(2)
        q = random_ffg_1hl(gen, width=2, input_dim=1)
        tq = tnets.lift(q)
        with pytest.raises(FloatingPointError):
            grad(lambda: torch.tensor(float("nan")), tq.parameters())

    def test_elbo_gradients(self):
        gen = np.random.default_rng(3)
        q = random_ffg_1hl(gen, width=4, input_dim=2)
        tq = tnets.lift(q)
        x = torch.tensor(gen.standard_normal((6, 2)))
        y = torch.tensor(gen.standard_normal(6))
        noise = tnets.draw_local_reparam_noise(tq, 6, 8,
                                               RngStream(1).generator())
        from bnnuq.objectives import _elbo_t
        loss = lambda: -_elbo_t(tq, x, y, self.LIK, self.PRIOR, noise)
        _fd_check(loss, tq.parameters(), gen)

    def test_mcdo_gradients(self):
        gen = np.random.default_rng(4)
        d = random_mcdo_1hl(gen, width=4, input_dim=2, dropout_rate=0.2)
        tmc = tnets.lift(d)
        x = torch.tensor(gen.standard_normal((6, 2)))
        y = torch.tensor(gen.standard_normal(6))
        masks = tnets.draw_mcdo_masks(tmc, 8, RngStream(2).generator())
        from bnnuq.objectives import _mcdo_objective_t
        loss = lambda: _mcdo_objective_t(tmc, x, y, self.LIK, self.PRIOR, masks)
        _fd_check(loss, tmc.parameters(), gen)

    def test_moment_match_gradients_ffg(self):
        gen = np.random.default_rng(5)
        q = random_ffg_1hl(gen, width=4, input_dim=1)
        tq = tnets.lift(q)
        grid = torch.tensor(np.linspace(-1, 1, 9)[:, None])
        noise = tnets.draw_ffg_weight_noise(tq, 16,
                                            RngStream(3).generator())
        tm = torch.zeros(9)
        tv = torch.ones(9)
        from bnnuq.objectives import _moment_match_t
        loss = lambda: _moment_match_t(tq, grid, tm, tv, noise)
        _fd_check(loss, tq.parameters(), gen)

    def test_moment_match_gradients_mcdo(self):
        gen = np.random.default_rng(6)
        d = random_mcdo_1hl(gen, width=4, input_dim=1, dropout_rate=0.1)
        tmc = tnets.lift(d)
        grid = torch.tensor(np.linspace(-1, 1, 9)[:, None])
        masks = tnets.draw_mcdo_masks(tmc, 16, RngStream(4).generator())
        tm = torch.zeros(9)
        tv = torch.ones(9)
        from bnnuq.objectives import _moment_match_t
        loss = lambda: _moment_match_t(tmc, grid, tm, tv, masks)
        _fd_check(loss, tmc.parameters(), gen)
