import numpy as np
import pytest
import scipy.sparse as sp

from dysign.diagnostics import gradient_instance
from dysign.errors import ValidationError
from dysign.gradients import (
    ORACLE_LIMITS,
    bptt_oracle,
    cross_entropy,
    finite_difference_check,
    forward_records,
    head_backward,
    instance_gradient,
    variation_gradient,
)
from dysign.graph import make_snapshot
from dysign.model import ModelParams, forward_timestep
from dysign.neuron import NeuronConfig

pytest.importorskip("torch")


def head_params(rng, n_in, C, T=1, h=None):
    h = h or n_in // T
    return ModelParams(np.zeros((h, h)), [np.zeros((h, 2))], rng.normal(size=(T * h, C)), rng.normal(size=C), NeuronConfig())


class TestCrossEntropy:
    def test_uniform(self):
        probs = np.full((4, 10), 0.1)
        assert cross_entropy(probs, np.arange(4), np.ones(4, bool)) == pytest.approx(np.log(10), abs=1e-12)

    def test_certain(self):
        assert cross_entropy(np.array([[1.0, 0.0]]), np.array([0]), np.array([True])) == 0.0

    def test_half(self):
        assert cross_entropy(np.array([[0.5, 0.5]]), np.array([1]), np.array([True])) == pytest.approx(np.log(2))

    def test_log_floor(self):
        assert cross_entropy(np.array([[1.0, 0.0]]), np.array([1]), np.array([True])) == pytest.approx(-np.log(1e-12))

    def test_mask_selects(self):
        probs = np.array([[0.5, 0.5], [1.0, 0.0]])
        assert cross_entropy(probs, np.array([0, 0]), np.array([False, True])) == 0.0

    def test_empty_mask(self):
        with pytest.raises(ValidationError):
            cross_entropy(np.full((2, 2), 0.5), np.array([0, 1]), np.zeros(2, bool))

    def test_nonnegative(self):
        rng = np.random.default_rng(0)
        logits = rng.normal(size=(30, 4))
        probs = np.exp(logits) / np.exp(logits).sum(1, keepdims=True)
        assert cross_entropy(probs, rng.integers(0, 4, 30), np.ones(30, bool)) >= 0


class TestVariationGradient:
    def test_zero_loss_gradient(self, rng):
        inst, params = gradient_instance(rng)
        records = [s.record for s in forward_records(inst, params)]
        zeros = [np.zeros_like(r.s[-1]) for r in records]
        for g in variation_gradient(records, zeros, params).grads.values():
            assert np.all(g == 0)

    def test_single_term_hand_example(self):
        snap = make_snapshot(sp.csr_matrix((1, 1)), np.array([[1.0]]))
        params = ModelParams(np.zeros((1, 1)), [np.ones((1, 1))], np.zeros((1, 2)), np.zeros(2), NeuronConfig(K=1, gamma=0.5))
        rec = forward_timestep(snap, None, params, slices=np.ones((1, 1, 1)), record=True).record
        assert rec.u[0][0, 0, 0] == 1.0 and rec.s[0][0, 0, 0] == 1.0
        grads = variation_gradient([rec], [np.ones((1, 1, 1))], params).grads
        assert grads["F1"][0, 0] == 1.0
        assert grads["W1"][0, 0] == 0.0  # no earlier last-layer spike at K=1

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_double_sum(self, seed):
        inst, params = gradient_instance(np.random.default_rng(seed))
        trace = instance_gradient(inst, params, "trace")
        double = instance_gradient(inst, params, "double_sum")
        assert trace.max_relative_deviation(double) <= 1e-10
        assert trace.loss == double.loss

    def test_missing_record(self, rng):
        inst, params = gradient_instance(rng)
        with pytest.raises(ValidationError):
            variation_gradient([None], [np.zeros((params.neuron.K, inst.num_nodes, params.hidden))], params)

    def test_hard_reset_rejected(self, rng):
        inst, params = gradient_instance(rng)
        hard = params.with_neuron(reset_mode="hard")
        with pytest.raises(ValidationError, match="soft reset"):
            instance_gradient(inst, hard)

    def test_shapes_and_finiteness(self, rng):
        inst, params = gradient_instance(rng, num_layers=2)
        bundle = instance_gradient(inst, params)
        for name, arr in params.arrays().items():
            assert bundle[name].shape == arr.shape
            assert np.all(np.isfinite(bundle[name]))


class TestBpttOracle:
    @pytest.mark.parametrize("seed", range(10))
    def test_agrees(self, seed):
        inst, params = gradient_instance(np.random.default_rng(100 + seed))
        assert instance_gradient(inst, params).max_relative_deviation(bptt_oracle(inst, params)) <= 1e-8

    @pytest.mark.parametrize("seed", range(5))
    def test_single_latency_step(self, seed):
        inst, params = gradient_instance(np.random.default_rng(200 + seed), K=1)
        trace = instance_gradient(inst, params)
        oracle = bptt_oracle(inst, params)
        for name in trace.grads:
            np.testing.assert_allclose(trace[name], oracle[name], rtol=1e-13, atol=1e-16)

    def test_k8(self):
        inst, params = gradient_instance(np.random.default_rng(7), n=32, num_layers=2, K=8)
        assert instance_gradient(inst, params).max_relative_deviation(bptt_oracle(inst, params)) <= 1e-8

    def test_zero_head_gives_zero_spiking_gradient(self, rng):
        inst, params = gradient_instance(rng)
        params = ModelParams(params.W1, params.F, np.zeros_like(params.head_W), params.head_b, params.neuron)
        oracle = bptt_oracle(inst, params)
        for name in ("W1", "F1"):
            assert np.all(oracle[name] == 0)

    @pytest.mark.parametrize("key", sorted(ORACLE_LIMITS))
    def test_refuses_large_instances(self, key):
        kwargs = {"n": 33} if key == "num_nodes" else {"K": 9} if key == "K" else {}
        rng = np.random.default_rng(0)
        if key == "num_layers":
            inst, params = gradient_instance(rng, num_layers=2)
            params = ModelParams(params.W1, params.F + [params.F[-1]], params.head_W, params.head_b, params.neuron)
        else:
            inst, params = gradient_instance(rng, **kwargs)
        with pytest.raises(ValidationError, match=key):
            bptt_oracle(inst, params)


class TestFiniteDifference:
    def setup_method(self):
        rng = np.random.default_rng(0)
        self.Z = rng.random((12, 6))
        self.params = head_params(rng, 6, 3)
        self.labels = rng.integers(0, 3, 12)
        self.mask = np.ones(12, bool)

    def test_default_step(self):
        assert finite_difference_check(self.Z, self.params, self.labels, self.mask, 1e-5) <= 1e-6

    def test_zero_inputs(self):
        _, _, dW, db, _ = head_backward(np.zeros_like(self.Z), self.params, self.labels, self.mask)
        assert np.all(dW == 0)
        assert np.any(db != 0)

    def test_richardson(self):
        # at 1e-5 float64 roundoff dominates the O(eps^2) truncation error,
        # so the quadratic ratio is observed at steps where truncation dominates
        d1 = finite_difference_check(self.Z, self.params, self.labels, self.mask, 1e-3)
        d2 = finite_difference_check(self.Z, self.params, self.labels, self.mask, 2e-3)
        assert 3.5 <= d2 / d1 <= 4.5

    def test_head_gradient_in_bundle_matches_fd(self, rng):
        inst, params = gradient_instance(rng)
        summaries = forward_records(inst, params)
        Z = np.concatenate([s.rates[-1] for s in summaries], axis=1)
        assert finite_difference_check(Z, params, inst.labels, inst.mask) <= 1e-6
