"""Seeded property suites exposed through ``dysign diagnose``.

Each suite returns a :class:`SuiteResult`; the thresholds are the ones the
test-suite asserts, so a PASS here and a green acceptance run mean the same
thing.
"""

from __future__ import annotations

import inspect
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .gradients import Instance, bptt_oracle, instance_gradient
from .graph import make_snapshot, normalize_adjacency
from .model import ModelParams, forward_timestep, init_params
from .neuron import NeuronConfig, RateAccumulator, bernoulli_encode, concentration_check, rate_normalizer, rate_update


@dataclass
class SuiteResult:
    name: str
    passed: bool
    summary: str
    details: dict = field(default_factory=dict)
    seconds: float = 0.0


def random_adjacency(rng, n, p=0.3):
    M = np.triu((rng.random((n, n)) < p).astype(np.float64), 1)
    return sp.csr_matrix(M + M.T)


def spectral_scaled(rng, shape, norm):
    M = rng.normal(size=shape)
    return M * (norm / np.linalg.norm(M, 2))


def trace_suite(seed=0, trains=1000, lams=(0.5, 0.9, 1.0, 1.1), Ks=(1, 4, 64), tol=1e-12):
    """Leaky trace after K steps against C times the weighted firing rate."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    per_lam = {}
    for lam in lams:
        for K in Ks:
            spikes = (rng.random((K, trains)) < rng.random(trains)).astype(np.float64)
            acc = RateAccumulator.zeros(trains)
            for k in range(K):
                acc = rate_update(acc, spikes[k], lam)
            C = rate_normalizer(lam, K)
            lhs, rhs = acc.trace, C * acc.rate
            scale = np.maximum(np.abs(lhs), np.finfo(float).tiny)
            err = float(np.max(np.where(lhs == rhs, 0.0, np.abs(lhs - rhs) / scale)))
            per_lam[f"lam={lam},K={K}"] = err
            worst = max(worst, err)
    summary = f"max relative error {worst:.3g} (tol {tol:g})"
    unit = [v for k, v in per_lam.items() if k.startswith("lam=1.0,")]
    if unit:
        summary += f"; at lam=1 {max(unit):.3g}"
    return SuiteResult("trace", worst <= tol, summary, per_lam)


def concentration_suite(seed=0, K=4096, eps=0.05, d=8, trials=1000, max_rate=0.05):
    report = concentration_check(np.full(d, 1.0 / d), np.full(d, 0.5), K, eps, np.random.default_rng(seed), trials)
    ok = report["empirical_exceed_rate"] <= max_rate
    summary = f"exceed rate {report['empirical_exceed_rate']:.4f} (<= {max_rate}), bound {report['bound_value']:.4g}"
    return SuiteResult("concentration", ok, summary, report)


def contractive_instance(rng, n=16, d=6, hidden=8, num_layers=2, norm=0.5, v_th=1.0):
    """Direct-mode problem whose weight matrices all have spectral norm ``norm * v_th``."""
    A = random_adjacency(rng, n)
    X = rng.random((n, d))
    W1 = spectral_scaled(rng, (hidden, hidden), norm * v_th)
    F = [spectral_scaled(rng, (hidden, d), norm * v_th)]
    F += [spectral_scaled(rng, (hidden, hidden), norm * v_th) for _ in range(num_layers - 1)]
    return make_snapshot(A, X), W1, F


def residual_at(snapshot, W1, F, K, v_th=1.0, lam=1.0):
    params = ModelParams(W1, F, np.zeros((W1.shape[0], 1)), np.zeros(1), NeuronConfig(v_th=v_th, lam=lam, K=K))
    return forward_timestep(snapshot, None, params, direct=True).residual


def residual_suite(seed=0, instances=100, short=8, long=64, required=95):
    rng = np.random.default_rng(seed)
    wins = 0
    pairs = []
    for _ in range(instances):
        snap, W1, F = contractive_instance(rng)
        r_short, r_long = residual_at(snap, W1, F, short), residual_at(snap, W1, F, long)
        pairs.append((r_short, r_long))
        wins += r_long < r_short
    ok = wins >= required
    med = np.median(np.array(pairs), axis=0)
    summary = f"{wins}/{instances} instances decay from K={short} to K={long} (need {required}); median {med[0]:.3g} -> {med[1]:.3g}"
    return SuiteResult("residual", ok, summary, {"wins": wins, "pairs": pairs})


def gradient_instance(rng, n=None, num_layers=None, K=None, lam=None, T=2, d=4, hidden=5, C=3):
    """Small random problem with weights large enough to land membranes in the surrogate window."""
    n = n or int(rng.integers(4, 33))
    num_layers = num_layers or int(rng.integers(1, 3))
    K = K or int(rng.integers(1, 9))
    lam = lam if lam is not None else float(rng.choice([0.5, 0.9, 1.0, 1.1]))
    neuron = NeuronConfig(lam=lam, K=K)
    A_hats = [normalize_adjacency(random_adjacency(rng, n)) for _ in range(T)]
    X = rng.random((n, d))
    slices = [bernoulli_encode(X, K, rng) for _ in range(T)]
    labels = rng.integers(0, C, n)
    mask = rng.random(n) < 0.7
    mask[0] = True
    p = init_params(d, hidden, num_layers, T, C, neuron, rng)
    params = ModelParams(2 * p.W1, [3 * f for f in p.F], 3 * p.head_W, rng.normal(size=C), neuron)
    return Instance(A_hats, slices, labels, mask), params


def gradient_suite(seed=0, instances=50, oracle_tol=1e-8, sum_tol=1e-10):
    rng = np.random.default_rng(seed)
    worst_sum = worst_oracle = 0.0
    for _ in range(instances):
        inst, params = gradient_instance(rng)
        trace = instance_gradient(inst, params, "trace")
        double = instance_gradient(inst, params, "double_sum")
        oracle = bptt_oracle(inst, params)
        worst_sum = max(worst_sum, trace.max_relative_deviation(double))
        worst_oracle = max(worst_oracle, trace.max_relative_deviation(oracle))
    ok = worst_sum <= sum_tol and worst_oracle <= oracle_tol
    summary = f"trace vs double-sum {worst_sum:.3g} (tol {sum_tol:g}); trace vs BPTT {worst_oracle:.3g} (tol {oracle_tol:g})"
    return SuiteResult("gradient", ok, summary, {"double_sum": worst_sum, "bptt": worst_oracle})


def equivariance_suite(seed=0, graphs=20, tol=1e-10):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(graphs):
        snap, W1, F = contractive_instance(rng, n=int(rng.integers(5, 40)), norm=1.5)
        params = ModelParams(W1, F, np.zeros((W1.shape[0], 1)), np.zeros(1), NeuronConfig(K=16))
        perm = rng.permutation(snap.num_nodes)
        psnap = make_snapshot(snap.adjacency[perm][:, perm], snap.features[perm])
        base = forward_timestep(snap, None, params, direct=True)
        moved = forward_timestep(psnap, None, params, direct=True)
        for a, b in zip(base.rates, moved.rates):
            worst = max(worst, float(np.max(np.abs(a[perm] - b))))
        worst = max(worst, abs(base.residual - moved.residual))
    return SuiteResult("equivariance", worst <= tol, f"max deviation {worst:.3g} (tol {tol:g})", {"max_dev": worst})


SUITES = {
    "trace": trace_suite,
    "concentration": concentration_suite,
    "residual": residual_suite,
    "gradient": gradient_suite,
    "equivariance": equivariance_suite,
}


def run_suites(names=None, seed=0, **kwargs):
    results = []
    for name in names or list(SUITES):
        fn = SUITES[name]
        accepted = inspect.signature(fn).parameters
        opts = {k: v for k, v in kwargs.items() if k in accepted}
        start = time.perf_counter()
        result = fn(seed=seed, **opts)
        result.seconds = time.perf_counter() - start
        results.append(result)
    return results
