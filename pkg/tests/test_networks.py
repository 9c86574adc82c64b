import json

import numpy as np
import pytest

from bnnuq.networks import (FFGParams, MCDOParams, NetworkSpec, PriorConfig,
                            closed_form_1hl_moments,
                            closed_form_1hl_moments_mcdo, forward,
                            init_params, params_from_json, params_to_json,
                            predictive_mc, sample_params)
from bnnuq.rng import RngStream
from helpers import random_ffg_1hl, random_mcdo_1hl


def _loop_forward(spec, theta, x):
    """Naive per-point, per-unit forward pass used as the oracle."""
    outs = []
    for row in np.atleast_2d(x):
        h = row
        for layer, (w, b) in enumerate(theta):
            z = np.array([float(w[i] @ h + b[i]) for i in range(w.shape[0])])
            h = np.maximum(z, 0.0) if layer < len(theta) - 1 else z
        outs.append(h)
    return np.array(outs)


class TestNetworkSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            NetworkSpec(0, (5,))
        with pytest.raises(ValueError):
            NetworkSpec(2, ())
        assert NetworkSpec(3, (4, 5), 2).layer_dims == [(3, 4), (4, 5), (5, 2)]


class TestForward:
    def test_constant_bias(self):
        spec = NetworkSpec(2, (3,))
        theta = [(np.zeros((3, 2)), np.zeros(3)),
                 (np.zeros((1, 3)), np.array([4.2]))]
        out = forward(spec, theta, np.array([[0.5, -1.0], [2.0, 2.0]]))
        np.testing.assert_allclose(out, 4.2)

    def test_relu_identityish(self):
        spec = NetworkSpec(1, (1,))
        theta = [(np.array([[1.0]]), np.zeros(1)),
                 (np.array([[1.0]]), np.zeros(1))]
        assert forward(spec, theta, [[2.0]])[0, 0] == 2.0
        assert forward(spec, theta, [[-2.0]])[0, 0] == 0.0

    def test_matches_loop_oracle(self):
        gen = np.random.default_rng(0)
        spec = NetworkSpec(3, (7, 5), 2)
        theta = [(gen.standard_normal((fo, fi)), gen.standard_normal(fo))
                 for fi, fo in spec.layer_dims]
        x = gen.standard_normal((6, 3))
        np.testing.assert_allclose(forward(spec, theta, x),
                                   _loop_forward(spec, theta, x), atol=1e-12)

    def test_shape_mismatch(self):
        spec = NetworkSpec(2, (3,))
        theta = [(np.zeros((3, 2)), np.zeros(3)), (np.zeros((1, 3)), np.zeros(1))]
        with pytest.raises(ValueError):
            forward(spec, theta, np.zeros((4, 5)))


class TestSampleParams:
    def test_ffg_degenerate(self):
        gen = np.random.default_rng(1)
        q = random_ffg_1hl(gen, width=4, input_dim=2)
        q = FFGParams(q.spec, q.weight_mean,
                      [np.full_like(a, np.log(1e-30)) for a in q.weight_log_std],
                      q.bias_mean,
                      [np.full_like(a, np.log(1e-30)) for a in q.bias_log_std])
        theta = sample_params(q, RngStream(0))
        np.testing.assert_allclose(theta[0][0], q.weight_mean[0], atol=1e-25)

    def test_mcdo_small_p_deterministic(self):
        gen = np.random.default_rng(2)
        d = random_mcdo_1hl(gen, width=5, input_dim=2, dropout_rate=1e-12)
        theta = sample_params(d, RngStream(0))
        np.testing.assert_array_equal(theta[1][0], d.weights[1])

    def test_ffg_sample_mean_clt(self):
        gen = np.random.default_rng(3)
        q = random_ffg_1hl(gen, width=3, input_dim=1)
        draws = sample_params(q, RngStream(5), n_samples=100_000)
        w00 = draws[0][0][:, 0, 0]
        se = q.weight_std[0][0, 0] / np.sqrt(len(w00))
        assert abs(w00.mean() - q.weight_mean[0][0, 0]) < 4 * se

    def test_mcdo_mask_rate(self):
        gen = np.random.default_rng(4)
        d = random_mcdo_1hl(gen, width=50, input_dim=2, dropout_rate=0.3)
        draws = sample_params(d, RngStream(6), n_samples=20_000)
        kept = np.mean(draws[1][0] != 0.0)
        assert kept == pytest.approx(0.7, abs=0.01)


class TestClosedForm1hlFfg:
    def test_all_sigma_zero(self):
        spec = NetworkSpec(1, (4,))
        gen = np.random.default_rng(7)
        mu = [gen.standard_normal((4, 1)), gen.standard_normal((1, 4))]
        bias = [gen.standard_normal(4), gen.standard_normal(1)]
        tiny = np.log(1e-300)
        q = FFGParams(spec, mu, [np.full_like(a, tiny) for a in mu],
                      bias, [np.full_like(a, tiny) for a in bias])
        x = np.array([[0.3], [-1.1]])
        m = closed_form_1hl_moments(spec, q, x)
        det = forward(spec, list(zip(mu, bias)), x)
        np.testing.assert_allclose(m.mean, det, atol=1e-12)
        np.testing.assert_allclose(m.variance, 0.0, atol=1e-12)

    def test_single_term_unit_variance(self):
        # deterministic hidden activation of 1, readout weight ~ N(0, 1):
        # variance is psi(1)^2 = 1
        spec = NetworkSpec(1, (1,))
        tiny = np.log(1e-300)
        q = FFGParams(
            spec,
            weight_mean=[np.array([[0.0]]), np.array([[0.0]])],
            weight_log_std=[np.array([[tiny]]), np.array([[0.0]])],
            bias_mean=[np.array([1.0]), np.array([0.0])],
            bias_log_std=[np.array([tiny]), np.array([tiny])],
        )
        m = closed_form_1hl_moments(spec, q, np.array([[0.7]]))
        assert m.variance[0, 0] == pytest.approx(1.0, abs=1e-12)

    def test_matches_mc(self):
        gen = np.random.default_rng(8)
        q = random_ffg_1hl(gen, width=50, input_dim=2)
        x = gen.standard_normal((3, 2))
        cf = closed_form_1hl_moments(q.spec, q, x)
        mc = predictive_mc(q.spec, q, x, 400_000, RngStream(9))
        se_mean = np.sqrt(np.asarray(cf.variance) / 400_000)
        assert np.all(np.abs(cf.mean - mc.mean) < 4 * se_mean)
        se_var = np.asarray(cf.variance) * np.sqrt(2.0 / 400_000) * 2.0
        assert np.all(np.abs(cf.variance - mc.variance) < 4 * se_var)

    def test_wrong_depth(self):
        spec = NetworkSpec(1, (3, 3))
        gen = np.random.default_rng(0)
        arrays = [(gen.standard_normal((fo, fi)), gen.standard_normal(fo))
                  for fi, fo in spec.layer_dims]
        q = FFGParams(spec, [w for w, _ in arrays],
                      [np.zeros_like(w) for w, _ in arrays],
                      [b for _, b in arrays],
                      [np.zeros_like(b) for _, b in arrays])
        with pytest.raises(ValueError):
            closed_form_1hl_moments(spec, q, np.zeros((1, 1)))


class TestClosedForm1hlMcdo:
    def test_bernoulli_single_neuron(self):
        # one unit with psi(a) = 2, w = 1, p = 0.5: var = 0.25 * 4 = 1
        spec = NetworkSpec(1, (1,))
        d = MCDOParams(spec, [np.array([[0.0]]), np.array([[1.0]])],
                       [np.array([2.0]), np.array([0.0])], 0.5, False)
        m = closed_form_1hl_moments_mcdo(spec, d, np.array([[0.0]]))
        assert m.variance[0, 0] == pytest.approx(1.0)
        assert m.mean[0, 0] == pytest.approx(0.5 * 2.0)

    def test_small_p_limit(self):
        gen = np.random.default_rng(11)
        d = random_mcdo_1hl(gen, width=20, input_dim=2, dropout_rate=1e-9)
        m = closed_form_1hl_moments_mcdo(d.spec, d, gen.standard_normal((4, 2)))
        assert np.all(np.asarray(m.variance) < 1e-6)

    def test_matches_mc(self):
        gen = np.random.default_rng(12)
        d = random_mcdo_1hl(gen, width=50, input_dim=2, dropout_rate=0.25)
        x = gen.standard_normal((3, 2))
        cf = closed_form_1hl_moments_mcdo(d.spec, d, x)
        mc = predictive_mc(d.spec, d, x, 400_000, RngStream(13))
        se_mean = np.sqrt(np.asarray(cf.variance) / 400_000)
        se_var = np.asarray(cf.variance) * np.sqrt(2.0 / 400_000) * 3.0
        assert np.all(np.abs(cf.mean - mc.mean) < 4 * se_mean + 1e-9)
        assert np.all(np.abs(cf.variance - mc.variance) < 4 * se_var + 1e-9)

    def test_rejects_dropped_inputs(self):
        gen = np.random.default_rng(13)
        d = random_mcdo_1hl(gen, width=5, input_dim=2, drop_inputs=True)
        with pytest.raises(ValueError):
            closed_form_1hl_moments_mcdo(d.spec, d, np.zeros((1, 2)))


class TestPredictiveMc:
    def test_deterministic_dist_zero_variance(self):
        spec = NetworkSpec(1, (4,))
        gen = np.random.default_rng(14)
        mu = [gen.standard_normal((4, 1)), gen.standard_normal((1, 4))]
        bias = [gen.standard_normal(4), gen.standard_normal(1)]
        tiny = np.log(1e-300)
        q = FFGParams(spec, mu, [np.full_like(a, tiny) for a in mu],
                      bias, [np.full_like(a, tiny) for a in bias])
        m = predictive_mc(spec, q, np.array([[0.5]]), 500, RngStream(1))
        assert float(np.max(m.variance)) < 1e-20

    def test_requires_two_samples(self):
        gen = np.random.default_rng(15)
        q = random_ffg_1hl(gen, width=2, input_dim=1)
        with pytest.raises(ValueError):
            predictive_mc(q.spec, q, np.zeros((1, 1)), 1, RngStream(0))


class TestInitParams:
    SPEC = NetworkSpec(3, (8, 8))
    PRIOR = PriorConfig(2.0, 1.0)

    def test_mfvi_default_log_stds(self):
        q = init_params(self.SPEC, "mfvi-default", self.PRIOR, RngStream(0))
        for arr in (*q.weight_log_std, *q.bias_log_std):
            np.testing.assert_allclose(arr, np.log(1e-5))

    def test_prior_init(self):
        q = init_params(self.SPEC, "prior", self.PRIOR, RngStream(0))
        np.testing.assert_allclose(q.weight_std[0], 2.0 / np.sqrt(3))
        np.testing.assert_allclose(q.weight_std[1], 2.0 / np.sqrt(8))
        np.testing.assert_allclose(q.bias_std[0], 1.0)
        assert all(np.all(m == 0) for m in q.weight_mean)

    def test_mcdo_default_bounds(self):
        d = init_params(self.SPEC, "mcdo-default", self.PRIOR, RngStream(0),
                        dropout_rate=0.1)
        assert np.max(np.abs(d.weights[0])) <= 1.0 / np.sqrt(3)
        assert np.max(np.abs(d.weights[1])) <= 1.0 / np.sqrt(8)

    def test_deterministic_given_seed(self):
        a = init_params(self.SPEC, "mfvi-default", self.PRIOR, RngStream(7))
        b = init_params(self.SPEC, "mfvi-default", self.PRIOR, RngStream(7))
        for x, y in zip(a.weight_mean, b.weight_mean):
            np.testing.assert_array_equal(x, y)


class TestSerialization:
    def test_roundtrip_ffg(self):
        gen = np.random.default_rng(16)
        q = random_ffg_1hl(gen, width=6, input_dim=2)
        q2 = params_from_json(params_to_json(q))
        assert isinstance(q2, FFGParams)
        for a, b in zip(q.weight_mean + q.bias_log_std,
                        q2.weight_mean + q2.bias_log_std):
            np.testing.assert_array_equal(a, b)

    def test_roundtrip_mcdo(self):
        gen = np.random.default_rng(17)
        d = random_mcdo_1hl(gen, width=6, input_dim=2, drop_inputs=True)
        d2 = params_from_json(params_to_json(d))
        assert isinstance(d2, MCDOParams)
        assert d2.dropout_rate == d.dropout_rate
        assert d2.drop_inputs is True
        np.testing.assert_array_equal(d.weights[0], d2.weights[0])

    def test_format_is_self_describing(self):
        gen = np.random.default_rng(18)
        doc = json.loads(params_to_json(random_ffg_1hl(gen, width=2)))
        assert doc["format"] == "bnnuq-params-v1"
        rec = doc["arrays"]["weight_mean_0"]
        assert rec["shape"] == [2, 1]
        assert len(rec["data"]) == 2
