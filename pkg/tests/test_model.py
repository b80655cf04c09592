import numpy as np
import pytest
import scipy.sparse as sp

from dysign.diagnostics import contractive_instance, residual_at
from dysign.errors import ValidationError
from dysign.graph import make_snapshot
from dysign.model import (
    LayerState,
    ModelParams,
    classify,
    equilibrium_residual,
    forward_latency_step,
    forward_timestep,
    init_params,
    run_dynamic,
    softmax,
)
from dysign.neuron import NeuronConfig
from dysign.synthetic import dynamic_sbm


def scalar_params(W1, F1, K=8, lam=1.0, T=1, F=()):
    h = 1
    return ModelParams(
        np.array([[W1]]), [np.array([[F1]])] + [np.array([[f]]) for f in F], np.zeros((T * h, 2)), np.zeros(2), NeuronConfig(lam=lam, K=K)
    )


def single_node_run(W1, F1, x, K, carry=None):
    snap = make_snapshot(sp.csr_matrix((1, 1)), np.array([[x]]))
    params = scalar_params(W1, F1, K=K)
    slices = np.full((K, 1, 1), x)
    return forward_timestep(snap, carry, params, slices=slices, record=True)


class TestLatencyStep:
    def test_zero_dynamics(self):
        params = init_params(3, 4, 2, 1, 2, NeuronConfig(), np.random.default_rng(0))
        params = ModelParams.from_arrays({k: np.zeros_like(v) for k, v in params.arrays().items()}, params.neuron)
        A = make_snapshot(sp.csr_matrix((5, 5)), np.zeros((5, 3))).norm_adjacency
        state = LayerState.initial(5, 4, 2)
        for _ in range(6):
            state = forward_latency_step(state, np.zeros((5, 3)), A, params)
            assert all(np.all(s == 0) for s in state.s)
        assert all(np.all(r == 0) for r in state.rates)

    def test_half_drive(self):
        out = single_node_run(0.0, 1.0, 0.5, 8)
        np.testing.assert_array_equal(out.record.s[0][:, 0, 0], [0, 1, 0, 1, 0, 1, 0, 1])
        assert out.rates[0][0, 0] == 0.5

    def test_full_drive(self):
        out = single_node_run(0.0, 1.0, 1.0, 8)
        np.testing.assert_array_equal(out.record.s[0][:, 0, 0], np.ones(8))
        assert out.rates[0][0, 0] == 1.0

    def test_feedback_uses_previous_latency_step(self):
        # only feedback drives the neuron: a spike at step k can raise u only at step k+1
        out = single_node_run(1.0, 1.0, 1.0, 3)
        u = out.record.u[0][:, 0, 0]
        # step 1: u = F*x = 1 (no feedback yet); step 2: soft reset -> 0 + W1*s1 + 1 = 2
        np.testing.assert_allclose(u[:2], [1.0, 2.0])

    def test_second_layer_reads_current_step(self):
        snap = make_snapshot(sp.csr_matrix((1, 1)), np.array([[1.0]]))
        params = scalar_params(0.0, 1.0, K=2, F=(1.0,))
        out = forward_timestep(snap, None, params, slices=np.ones((2, 1, 1)), record=True)
        np.testing.assert_array_equal(out.record.s[1][:, 0, 0], [1, 1])

    def test_shape_check(self):
        params = scalar_params(0.0, 1.0)
        A = sp.csr_matrix(np.eye(2))
        with pytest.raises(ValidationError):
            forward_latency_step(LayerState.initial(2, 1, 1), np.zeros((2, 3)), A, params)


class TestForwardTimestep:
    def test_zero_carry_equals_no_carry(self):
        graph = dynamic_sbm(num_nodes=30, num_steps=1, feature_dim=5, seed=1)
        params = init_params(5, 6, 2, 1, 2, NeuronConfig(), np.random.default_rng(0))
        snap = graph.snapshots[0]
        a = forward_timestep(snap, None, params, 11)
        b = forward_timestep(snap, [np.zeros((30, 6))] * 2, params, 11)
        for x, y in zip(a.rates, b.rates):
            np.testing.assert_array_equal(x, y)

    def test_carry_sets_initial_membranes(self):
        state = LayerState.initial(1, 2, 1, carry=[np.array([[0.5, 0.25]])])
        np.testing.assert_array_equal(state.u[0], [[0.5, 0.25]])
        np.testing.assert_array_equal(state.s[0], [[0.0, 0.0]])

    def test_carry_enters_first_membrane_update(self):
        # with no input the first latency membrane is just the leaked carry
        snap = make_snapshot(sp.csr_matrix((1, 1)), np.array([[0.0]]))
        params = ModelParams(np.zeros((2, 2)), [np.zeros((2, 1))], np.zeros((2, 2)), np.zeros(2), NeuronConfig(K=2))
        out = forward_timestep(snap, [np.array([[0.5, 0.25]])], params, slices=np.zeros((2, 1, 1)), record=True)
        np.testing.assert_array_equal(out.record.u[0][0], [[0.5, 0.25]])

    def test_carry_shape_checked(self):
        with pytest.raises(ValidationError):
            LayerState.initial(2, 2, 1, carry=[np.zeros((3, 2))])

    def test_fixed_point_with_feedback(self):
        out = single_node_run(0.5, 0.5, 1.0, 64)
        assert out.rates[0][0, 0] >= 0.9

    def test_no_feedback_settles_at_input_share(self):
        # without feedback the drive is 0.5 per step, so the rate is 0.5 (the fixed
        # point of a = clamp(0.5 a + 0.5) = 1 needs the feedback weight 0.5)
        out = single_node_run(0.0, 0.5, 1.0, 64)
        assert out.rates[0][0, 0] == 0.5

    def test_rates_and_spikes_well_formed(self):
        graph = dynamic_sbm(num_nodes=40, num_steps=2, feature_dim=4, seed=5)
        p = init_params(4, 8, 2, 2, 2, NeuronConfig(lam=1.1, K=6), np.random.default_rng(3))
        p = ModelParams(4 * p.W1, [4 * f for f in p.F], p.head_W, p.head_b, p.neuron)
        for summary in run_dynamic(graph, p, np.random.default_rng(0), record=True):
            assert summary.residual >= 0
            for rate, spikes in zip(summary.rates, summary.record.s):
                assert rate.min() >= 0 and rate.max() <= 1
                assert set(np.unique(spikes)) <= {0.0, 1.0}

    def test_carry_determinism(self):
        graph = dynamic_sbm(num_nodes=40, num_steps=3, feature_dim=4, seed=5)
        p = init_params(4, 8, 2, 3, 2, NeuronConfig(), np.random.default_rng(3))
        a = run_dynamic(graph, p, np.random.default_rng(9))
        b = run_dynamic(graph, p, np.random.default_rng(9))
        for x, y in zip(a, b):
            for r, s in zip(x.rates, y.rates):
                np.testing.assert_array_equal(r, s)

    def test_no_carry_is_independent_static_runs(self):
        graph = dynamic_sbm(num_nodes=40, num_steps=3, feature_dim=4, seed=5)
        p = init_params(4, 8, 2, 3, 2, NeuronConfig(), np.random.default_rng(3))
        p = ModelParams(3 * p.W1, [3 * f for f in p.F], p.head_W, p.head_b, p.neuron)
        seq = run_dynamic(graph, p, direct=True, carry=False)
        for snap, summary in zip(graph.snapshots, seq):
            alone = forward_timestep(snap, None, p, direct=True)
            for r, s in zip(alone.rates, summary.rates):
                np.testing.assert_array_equal(r, s)

    def test_carry_changes_later_steps(self):
        graph = dynamic_sbm(num_nodes=40, num_steps=2, feature_dim=4, seed=5)
        p = init_params(4, 8, 1, 2, 2, NeuronConfig(K=4), np.random.default_rng(3))
        p = ModelParams(3 * p.W1, [3 * f for f in p.F], p.head_W, p.head_b, p.neuron)
        with_carry = run_dynamic(graph, p, direct=True)
        without = run_dynamic(graph, p, direct=True, carry=False)
        np.testing.assert_array_equal(with_carry[0].rates[0], without[0].rates[0])
        assert not np.array_equal(with_carry[1].rates[0], without[1].rates[0])

    @pytest.mark.parametrize("seed", range(5))
    def test_permutation_equivariance(self, seed):
        rng = np.random.default_rng(seed)
        snap, W1, F = contractive_instance(rng, n=25, norm=1.5)
        params = ModelParams(W1, F, np.zeros((W1.shape[0], 1)), np.zeros(1), NeuronConfig(K=16))
        perm = rng.permutation(25)
        moved = make_snapshot(snap.adjacency[perm][:, perm], snap.features[perm])
        a = forward_timestep(snap, None, params, direct=True)
        b = forward_timestep(moved, None, params, direct=True)
        for x, y in zip(a.rates, b.rates):
            np.testing.assert_allclose(x[perm], y, atol=1e-10, rtol=0)
        assert abs(a.residual - b.residual) <= 1e-10


class TestResidual:
    A = sp.csr_matrix(np.array([[1.0]]))

    def test_exact_solution(self):
        params = scalar_params(0.0, 1.0)
        assert equilibrium_residual([np.array([[0.5]])], np.array([[0.5]]), self.A, params) == 0.0

    def test_off_by_point_two(self):
        params = scalar_params(0.0, 1.0)
        r = equilibrium_residual([np.array([[0.7]])], np.array([[0.5]]), self.A, params)
        assert r == pytest.approx(0.2, abs=1e-15)

    def test_block_solution_two_layers(self):
        params = scalar_params(0.5, 0.5, F=(0.8,))
        # a1 = 0.5 * a2 + 0.5 * 0.4 and a2 = 0.8 * a1  =>  a1 = 0.2 / 0.6
        a1 = np.array([[0.2 / 0.6]])
        a2 = 0.8 * a1
        r = equilibrium_residual([a1, a2], np.array([[0.4]]), self.A, params)
        assert r == pytest.approx(0.0, abs=1e-15)

    def test_decays_with_latency(self):
        rng = np.random.default_rng(0)
        wins = 0
        for _ in range(20):
            snap, W1, F = contractive_instance(rng)
            wins += residual_at(snap, W1, F, 64) < residual_at(snap, W1, F, 8)
        assert wins >= 18


class TestClassify:
    def test_uniform(self):
        p = init_params(3, 4, 1, 2, 10, NeuronConfig(K=2), np.random.default_rng(0))
        p = ModelParams(p.W1, p.F, np.zeros_like(p.head_W), np.zeros(10), p.neuron)
        graph = dynamic_sbm(num_nodes=12, num_steps=2, feature_dim=3, seed=0)
        probs = classify(run_dynamic(graph, p, np.random.default_rng(0)), p)
        np.testing.assert_array_equal(probs, np.full((12, 10), 0.1))

    def test_rows_sum_to_one(self):
        logits = np.random.default_rng(0).normal(scale=30, size=(50, 7))
        np.testing.assert_allclose(softmax(logits).sum(axis=1), 1.0, atol=1e-9)

    def test_hand_example(self):
        np.testing.assert_allclose(softmax(np.array([[np.log(3.0), 0.0]])), [[0.75, 0.25]], atol=1e-15)

    def test_step_count_mismatch(self):
        p = init_params(3, 4, 1, 3, 2, NeuronConfig(K=2), np.random.default_rng(0))
        graph = dynamic_sbm(num_nodes=12, num_steps=2, feature_dim=3, seed=0)
        with pytest.raises(ValidationError):
            run_dynamic(graph, p)
        with pytest.raises(ValidationError):
            classify([None, None], p)


class TestParams:
    def test_shapes(self):
        p = init_params(16, 128, 3, 5, 4, NeuronConfig(), np.random.default_rng(0))
        assert p.W1.shape == (128, 128) and p.F[0].shape == (128, 16) and p.F[2].shape == (128, 128)
        assert p.head_W.shape == (5 * 128, 4) and p.head_b.shape == (4,)
        assert np.abs(p.F[0]).max() <= 1 / np.sqrt(16)
        assert list(p.arrays()) == ["W1", "F1", "F2", "F3", "head_W", "head_b"]

    def test_non_finite_rejected(self):
        with pytest.raises(ValidationError):
            scalar_params(np.nan, 1.0)

    def test_round_trip_arrays(self):
        p = init_params(4, 5, 2, 2, 3, NeuronConfig(), np.random.default_rng(0))
        q = ModelParams.from_arrays(p.arrays(), p.neuron)
        for k, v in p.arrays().items():
            np.testing.assert_array_equal(v, q.arrays()[k])
