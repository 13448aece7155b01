import math

import numpy as np
import pytest

from spikesurv import autograd as ag
from spikesurv.dataset import TimeGrid
from spikesurv.errors import DimensionError, NumericalError
from spikesurv.mtlr import survival_curves
from spikesurv.variational import (
    BayesNetConfig,
    NetworkParams,
    SampledWeights,
    SpikeSlabParam,
    WeightNoise,
    forward,
    inclusion_prob,
    kl_spike_slab,
    kl_terms,
    network_kl,
    predict_mc,
    sample_network,
    sample_weight,
)


def _logit(g):
    return math.log(g / (1 - g))


def _kl_reference(mu, sigma, gamma, alpha):
    gauss = gamma / 2 * (mu**2 + sigma**2 - math.log(sigma**2))
    return gauss + (1 - gamma) * math.log((1 - alpha) / (1 - gamma)) + gamma * math.log(alpha / gamma)


def _params(d=3, m=4, seed=0, **cfg):
    config = BayesNetConfig(d=d, m=m, **cfg)
    return NetworkParams.init(config, np.random.default_rng(seed)), config


class TestSpikeSlabParam:
    def test_transforms(self):
        p = SpikeSlabParam(0.2, 0.0, 0.0)
        assert p.sigma == pytest.approx(math.log(2.0), abs=1e-15)
        assert p.gamma == 0.5

    def test_gamma_clamped(self):
        assert SpikeSlabParam(0, 0, 100.0).gamma == 1 - 1e-6
        assert SpikeSlabParam(0, 0, -100.0).gamma == 1e-6


class TestKL:
    def test_plug_in(self):
        p = SpikeSlabParam(0.0, math.log(math.e - 1), 0.0)
        assert kl_spike_slab([p], alpha=0.5, M=1) == pytest.approx(0.25, abs=1e-15)

    def test_dense_reduction(self):
        p = SpikeSlabParam(1.0, math.log(math.e - 1), -3.0)
        assert kl_spike_slab([p], alpha=1.0) == pytest.approx(1.0, abs=1e-15)

    def test_scales_with_M(self):
        ps = [SpikeSlabParam(0.3, -1.0, 1.0), SpikeSlabParam(-2.0, 0.5, -0.5)]
        assert kl_spike_slab(ps, 0.3, M=2) == pytest.approx(kl_spike_slab(ps, 0.3, M=1) / 2, rel=1e-15)

    def test_matches_reference(self, rng):
        for _ in range(50):
            mu, rho, logit = rng.normal(0, 2, 3)
            alpha = rng.uniform(0.05, 0.95)
            p = SpikeSlabParam(mu, rho, logit)
            want = _kl_reference(mu, p.sigma, p.gamma, alpha)
            assert kl_spike_slab([p], alpha) == pytest.approx(want, rel=1e-12, abs=1e-12)

    def test_empty(self):
        assert kl_spike_slab([], 0.5) == 0.0

    def test_network_kl_counts_biases_as_gaussian(self):
        params, config = _params(d=2, m=2, alpha=0.4)
        p = params.arrays()
        weights = network_kl({**p, "bias_mu": np.zeros(4), "bias_rho": np.zeros(4)}, 0.4)
        ss = kl_spike_slab(params.spike_slab_params(), 0.4)
        s = math.log(2.0)
        bias = 4 * 0.5 * (s * s - math.log(s * s))
        assert weights == pytest.approx(ss + bias, rel=1e-12)

    def test_kl_terms_gradient(self, rng):
        pv = ag.ParamVector.from_arrays({"mu": rng.normal(size=5), "rho": rng.normal(size=5), "l": rng.normal(size=5)})
        fn = lambda p: ag.sum_(kl_terms(p["mu"], ag.softplus(p["rho"]), inclusion_prob(p["l"]), 0.3))
        assert ag.grad_check(fn, pv) < 1e-6


class TestSampling:
    def test_open_gate_passes_slab(self):
        p = SpikeSlabParam(0.5, 0.0, _logit(0.9))
        w = sample_weight(p, eta=0.9999, eps=1.0, c=1e4)
        assert w == pytest.approx(0.5 + math.log(2.0), rel=1e-12)

    def test_closed_gate_zeroes(self):
        p = SpikeSlabParam(0.5, 0.0, _logit(0.1))
        assert abs(sample_weight(p, eta=0.01, eps=1.0, c=1e4)) < 1e-12

    def test_dense_ignores_gate(self):
        p = SpikeSlabParam(0.5, 0.0, -20.0)
        assert sample_weight(p, 0.0, 2.0, 10.0, dense=True) == pytest.approx(0.5 + 2 * math.log(2.0))

    def test_inclusion_frequency(self, rng):
        p = SpikeSlabParam(1.0, -20.0, _logit(0.3))
        draws = [sample_weight(p, e, 0.0, 1e3) for e in rng.random(20000)]
        assert abs(np.mean(np.array(draws) > 0.5) - 0.3) < 0.015

    def test_temperature_validation(self):
        with pytest.raises(ValueError):
            sample_weight(SpikeSlabParam(0, 0, 0), 0.5, 0.0, 0.0)


class TestNetworkParams:
    def test_shapes(self):
        params, _ = _params(d=3, m=4)
        assert params.gate_mu.shape == (3,) and params.out_mu.shape == (3, 8) and params.bias_mu.shape == (8,)
        assert (params.d, params.m) == (3, 4)
        assert len(params.spike_slab_params()) == 3 + 24

    def test_vector_round_trip(self):
        params, _ = _params()
        back = NetworkParams.from_vector(params.to_vector())
        for name in NetworkParams.FIELDS:
            np.testing.assert_array_equal(getattr(back, name), getattr(params, name))

    def test_rejects_nan(self):
        params, _ = _params()
        arrays = params.arrays()
        arrays["out_mu"][0, 0] = np.nan
        with pytest.raises(NumericalError):
            NetworkParams(**arrays)

    def test_rejects_shape_mismatch(self):
        params, _ = _params()
        arrays = params.arrays()
        arrays["gate_rho"] = np.zeros(5)
        with pytest.raises(DimensionError):
            NetworkParams(**arrays)

    @pytest.mark.parametrize("kw", [{"alpha": 0.0}, {"alpha": 1.5}, {"gate_temperature": 0.0}, {"d": 0}])
    def test_config_validation(self, kw):
        base = {"d": 2, "m": 2, **kw}
        with pytest.raises(ValueError):
            BayesNetConfig(**base)


class TestForward:
    def test_known_weights(self):
        w = SampledWeights(
            gate=np.array([2.0, -1.0]),
            out=np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]]),
            bias=np.array([0.0, 0.0, 0.0, 40.0]),
        )
        scores, sigma = forward(np.array([[1.0, 1.0], [-1.0, -3.0]]), w)
        np.testing.assert_array_equal(scores, [[2.0, 0.0], [0.0, 3.0]])
        np.testing.assert_allclose(sigma, [[1.0, math.exp(5.0)], [1.0, math.exp(5.0)]])

    def test_dimension_check(self):
        params, config = _params(d=3)
        w = sample_network(params.arrays(), WeightNoise.draw(3, 4, np.random.default_rng(0)), config)
        with pytest.raises(DimensionError):
            forward(np.zeros((2, 4)), w)


class TestPredictMC:
    grid = TimeGrid([1.0, 2.0, 3.0, 4.0])

    def test_shapes_and_ranges(self, rng):
        params, config = _params()
        pred = predict_mc(rng.normal(size=(7, 3)), params, config, self.grid, seed=1, weight_samples=8)
        assert pred.mean.shape == pred.model_std.shape == pred.data_std.shape == (7, 4)
        assert np.all(pred.model_std >= 0) and np.all(pred.data_std >= 0)
        assert np.all(np.diff(pred.mean, axis=1) <= 0)

    def test_patient_independent_of_cohort(self, rng):
        params, config = _params()
        X = rng.normal(size=(5, 3))
        full = predict_mc(X, params, config, self.grid, seed=4, weight_samples=6)
        one = predict_mc(X[2], params, config, self.grid, seed=4, weight_samples=6)
        np.testing.assert_array_equal(full.mean[2], one.mean)
        np.testing.assert_array_equal(full.model_std[2], one.model_std)
        np.testing.assert_array_equal(full.data_std[2], one.data_std)

    def test_deterministic(self, rng):
        params, config = _params()
        X = rng.normal(size=(3, 3))
        a = predict_mc(X, params, config, self.grid, seed=9, weight_samples=5)
        b = predict_mc(X, params, config, self.grid, seed=9, weight_samples=5)
        assert a.mean.tobytes() == b.mean.tobytes()

    def test_point_posterior_has_no_model_spread(self, rng):
        params, config = _params(alpha=1.0)
        arrays = params.arrays()
        for name in ("gate_rho", "out_rho", "bias_rho"):
            arrays[name] = np.full_like(arrays[name], -60.0)
        params = NetworkParams(**arrays)
        pred = predict_mc(rng.normal(size=(3, 3)), params, config, self.grid, weight_samples=4)
        assert np.max(pred.model_std) < 1e-12
        assert np.min(pred.data_std) > 0

    def test_zero_weights_uniform(self):
        params, config = _params(alpha=1.0)
        arrays = {k: np.zeros_like(v) for k, v in params.arrays().items()}
        for name in ("gate_rho", "out_rho", "bias_rho"):
            arrays[name] = np.full_like(arrays[name], -60.0)
        arrays["bias_mu"][4:] = -10.0
        pred = predict_mc(np.ones((1, 3)), NetworkParams(**arrays), config, self.grid, weight_samples=2)
        np.testing.assert_allclose(pred.mean[0], [0.8, 0.6, 0.4, 0.2], atol=1e-2)

    def test_keep_curves(self, rng):
        params, config = _params()
        pred = predict_mc(rng.normal(size=(2, 3)), params, config, self.grid, weight_samples=3, keep_curves=True)
        assert pred.curves.shape == (3, 2, config.data_noise_samples, 4)
        np.testing.assert_allclose(pred.curves.mean(axis=(0, 2)), pred.mean, rtol=1e-12)
        assert pred[1].curves.shape == (3, config.data_noise_samples, 4)

    def test_mean_matches_manual(self, rng):
        params, config = _params()
        X = rng.normal(size=(2, 3))
        pred = predict_mc(X, params, config, self.grid, seed=2, weight_samples=1, noise_samples=1)
        r = np.random.default_rng([2, 0])
        w = sample_network(params.arrays(), WeightNoise.draw(3, 4, r), config)
        eps = np.random.default_rng([2]).standard_normal((1, 4))
        scores, sigma = forward(X, w)
        np.testing.assert_allclose(pred.mean, survival_curves(scores + sigma * eps[0]), rtol=1e-12)

    def test_dimension_error(self):
        params, config = _params()
        with pytest.raises(DimensionError):
            predict_mc(np.zeros((1, 2)), params, config, self.grid)
