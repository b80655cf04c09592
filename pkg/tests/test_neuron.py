import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dysign.errors import ValidationError
from dysign.neuron import (
    NeuronConfig,
    RateAccumulator,
    bernoulli_encode,
    clamp_sigma,
    concentration_check,
    heaviside,
    lif_step,
    rate_normalizer,
    rate_update,
    surrogate_derivative,
)

finite = st.floats(-50, 50, allow_nan=False)


def accumulate(spikes, lam):
    acc = RateAccumulator.zeros(np.shape(spikes[0]))
    for s in spikes:
        acc = rate_update(acc, np.asarray(s, dtype=float), lam)
    return acc


class TestNeuronConfig:
    def test_defaults(self):
        cfg = NeuronConfig()
        assert (cfg.v_th, cfg.lam, cfg.reset_mode, cfg.width) == (1.0, 1.0, "soft", 0.5)

    @pytest.mark.parametrize(
        "kwargs", [{"v_th": 0}, {"lam": 0}, {"lam": 1.3}, {"K": 0}, {"K": 2.5}, {"gamma": 0}, {"reset_mode": "x"}]
    )
    def test_rejects(self, kwargs):
        with pytest.raises(ValidationError):
            NeuronConfig(**kwargs)


class TestHeaviside:
    @pytest.mark.parametrize("u,expected", [(1.2, 1), (0.5, 0), (1.0, 1)])
    def test_examples(self, u, expected):
        assert heaviside(u, 1.0) == expected

    @given(st.lists(finite, min_size=1, max_size=20))
    def test_binary(self, u):
        s = heaviside(np.array(u), 1.0)
        assert set(np.unique(s)) <= {0.0, 1.0}


class TestLifStep:
    def test_soft_reset_example(self):
        u, s = lif_step(1.2, 1, 0.3, NeuronConfig(lam=0.5))
        assert u == pytest.approx(0.4, abs=1e-15) and s == 0

    def test_rest(self):
        u, s = lif_step(0.0, 0.0, 0.0, NeuronConfig())
        assert u == 0 and s == 0

    def test_crossing(self):
        u, s = lif_step(0.6, 0, 0.5, NeuronConfig())
        assert u == pytest.approx(1.1) and s == 1

    def test_hard_reset(self):
        u, s = lif_step(1.2, 1, 0.3, NeuronConfig(lam=0.5, reset_mode="hard"))
        assert u == pytest.approx(0.3) and s == 0
        u, _ = lif_step(0.8, 0, 0.1, NeuronConfig(lam=0.5, reset_mode="hard"))
        assert u == pytest.approx(0.5)

    @given(st.lists(finite, min_size=1, max_size=10), st.floats(0.01, 0.99))
    def test_soft_leak_contracts(self, u, lam):
        u = np.array(u)
        u_next, _ = lif_step(u, np.zeros_like(u), 0.0, NeuronConfig(lam=lam))
        np.testing.assert_allclose(np.abs(u_next), lam * np.abs(u), rtol=1e-15, atol=0)


class TestSurrogate:
    def test_center(self):
        assert surrogate_derivative(1.0, NeuronConfig(gamma=0.5)) == 1.0

    def test_outside(self):
        assert surrogate_derivative(1.0 + 2 * 0.5, NeuronConfig()) == 0.0

    def test_boundary_inside(self):
        assert surrogate_derivative(1.0 - 0.25, NeuronConfig(gamma=0.25)) == 2.0

    def test_default_width(self):
        cfg = NeuronConfig(v_th=2.0)
        assert surrogate_derivative(2.0, cfg) == pytest.approx(1 / 2.0)


class TestBernoulli:
    def test_degenerate(self):
        X = np.array([[0.0, 1.0]])
        s = bernoulli_encode(X, 50, 0)
        assert s.shape == (50, 1, 2)
        assert np.all(s[:, 0, 0] == 0) and np.all(s[:, 0, 1] == 1)

    def test_mean(self):
        s = bernoulli_encode(np.array([0.5]), 10_000, 2024)
        assert 0.48 <= s.mean() <= 0.52

    def test_reproducible(self):
        X = np.random.default_rng(1).random((7, 3))
        np.testing.assert_array_equal(bernoulli_encode(X, 9, 42), bernoulli_encode(X, 9, 42))
        a = bernoulli_encode(X, 9, np.random.default_rng(5))
        b = bernoulli_encode(X, 9, np.random.default_rng(5))
        np.testing.assert_array_equal(a, b)

    @pytest.mark.parametrize("bad", [-0.1, 1.01, np.nan])
    def test_out_of_range(self, bad):
        with pytest.raises(ValidationError):
            bernoulli_encode(np.array([0.5, bad]), 3, 0)


class TestClamp:
    @pytest.mark.parametrize("x,y", [(-0.3, 0.0), (0.4, 0.4), (1.7, 1.0)])
    def test_examples(self, x, y):
        assert clamp_sigma(x) == y

    @given(finite, finite)
    def test_idempotent_and_lipschitz(self, a, b):
        assert clamp_sigma(clamp_sigma(a)) == clamp_sigma(a)
        assert abs(clamp_sigma(a) - clamp_sigma(b)) <= abs(a - b)


class TestRateAccumulator:
    def test_plain_mean(self):
        assert accumulate([[1.0], [0.0], [1.0]], 1.0).rate[0] == pytest.approx(2 / 3)

    def test_leaky_rate(self):
        acc = accumulate([1.0, 0.0, 1.0], 0.5)
        assert acc.rate == pytest.approx(5 / 7, abs=1e-15)
        assert acc.normalizer == pytest.approx(1.75)

    def test_zero(self):
        assert accumulate([[0.0, 0.0]] * 4, 0.9).rate.tolist() == [0.0, 0.0]

    def test_normalizer(self):
        assert rate_normalizer(0.5, 3) == 1.75 and rate_normalizer(1.0, 8) == 8.0
        assert NeuronConfig(lam=0.5, K=3).normalizer == 1.75

    @settings(max_examples=60)
    @given(
        st.integers(1, 64),
        st.sampled_from([0.5, 0.9, 1.0, 1.1]),
        st.integers(0, 2**31 - 1),
    )
    def test_trace_equals_C_times_rate(self, K, lam, seed):
        spikes = (np.random.default_rng(seed).random((K, 16)) < 0.5).astype(float)
        acc = accumulate(spikes, lam)
        C = rate_normalizer(lam, K)
        np.testing.assert_allclose(acc.trace, C * acc.rate, rtol=1e-12, atol=0)
        np.testing.assert_array_equal(acc.trace, acc.weighted_sum)
        assert acc.rate.min() >= 0 and acc.rate.max() <= 1 + 1e-15

    def test_exact_at_unit_leak(self):
        spikes = (np.random.default_rng(0).random((64, 100)) < 0.3).astype(float)
        acc = accumulate(spikes, 1.0)
        np.testing.assert_array_equal(acc.trace, 64.0 * acc.rate)


class TestConcentration:
    def test_zero_weights(self):
        rep = concentration_check(np.zeros(4), np.full(4, 0.5), 128, 0.01, 0, trials=200)
        assert rep["empirical_exceed_rate"] == 0.0

    def test_deterministic_input(self):
        rep = concentration_check(np.full(4, 0.25), np.ones(4), 128, 0.01, 0, trials=200)
        assert rep["empirical_exceed_rate"] == 0.0

    def test_reference_scale(self):
        rep = concentration_check(np.full(8, 1 / 8), np.full(8, 0.5), 4096, 0.05, np.random.default_rng(0), trials=1000)
        assert rep["empirical_exceed_rate"] <= 0.05
        assert rep["expected"] == pytest.approx(0.5)
        assert 0 < rep["bound_value"] <= 1 and rep["sigma"] > 0

    def test_reproducible(self):
        args = (np.full(3, 0.3), np.array([0.2, 0.5, 0.9]), 200, 0.02)
        assert concentration_check(*args, 7, trials=100) == concentration_check(*args, 7, trials=100)
