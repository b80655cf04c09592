"""Information-compensation spiking graph network.

Layer 1 receives the graph-aggregated encoded input through the
compensation matrix ``F[0]`` plus feedback from the last layer through
``W1``; every later layer ``l`` receives the aggregated spikes of layer
``l - 1`` through ``F[l]``.  Arrays are node-major: potentials and spikes
have shape ``(num_nodes, hidden)`` and a current is ``(A_hat @ pre) @ M.T``.

Within a latency step the layers are evaluated in order.  The feedback term
uses the last layer's spikes from the previous latency step, since the
current-step spikes of layer N do not exist yet when layer 1 integrates.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import ValidationError
from .neuron import (
    NeuronConfig,
    RateAccumulator,
    bernoulli_encode,
    clamp_sigma,
    lif_step,
    rate_update,
)


@dataclass(eq=False)
class ModelParams:
    W1: np.ndarray
    F: list
    head_W: np.ndarray
    head_b: np.ndarray
    neuron: NeuronConfig = field(default_factory=NeuronConfig)

    def __post_init__(self):
        self.W1 = np.asarray(self.W1, dtype=np.float64)
        self.F = [np.asarray(f, dtype=np.float64) for f in self.F]
        self.head_W = np.asarray(self.head_W, dtype=np.float64)
        self.head_b = np.asarray(self.head_b, dtype=np.float64)
        h = self.hidden
        if not self.F:
            raise ValidationError("at least one layer is required")
        if h < 1 or self.W1.shape != (h, h):
            raise ValidationError(f"W1 must be square (hidden x hidden), got {self.W1.shape}")
        if self.F[0].ndim != 2 or self.F[0].shape[0] != h:
            raise ValidationError(f"F1 must be (hidden x input_dim), got {self.F[0].shape}")
        for l, f in enumerate(self.F[1:], start=2):
            if f.shape != (h, h):
                raise ValidationError(f"F{l} must be (hidden x hidden), got {f.shape}")
        if self.head_W.ndim != 2 or self.head_W.shape[0] % h:
            raise ValidationError(f"head width {self.head_W.shape} is not a multiple of hidden {h}")
        if self.head_b.shape != (self.head_W.shape[1],):
            raise ValidationError("head bias must have one entry per class")
        for name, arr in self.arrays().items():
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"parameter {name} contains non-finite values")

    @property
    def hidden(self):
        return self.W1.shape[0]

    @property
    def num_layers(self):
        return len(self.F)

    @property
    def input_dim(self):
        return self.F[0].shape[1]

    @property
    def num_classes(self):
        return self.head_W.shape[1]

    @property
    def num_steps(self):
        return self.head_W.shape[0] // self.hidden

    def arrays(self):
        """Name -> array view of every trainable matrix, in a fixed order."""
        out = {"W1": self.W1}
        for l, f in enumerate(self.F, start=1):
            out[f"F{l}"] = f
        out["head_W"] = self.head_W
        out["head_b"] = self.head_b
        return out

    @classmethod
    def from_arrays(cls, arrays, neuron):
        n_layers = sum(1 for k in arrays if k.startswith("F"))
        return cls(
            W1=arrays["W1"],
            F=[arrays[f"F{l}"] for l in range(1, n_layers + 1)],
            head_W=arrays["head_W"],
            head_b=arrays["head_b"],
            neuron=neuron,
        )

    def copy(self):
        return ModelParams.from_arrays({k: v.copy() for k, v in self.arrays().items()}, self.neuron)

    def with_neuron(self, **changes):
        return ModelParams.from_arrays(self.arrays(), replace(self.neuron, **changes))


def init_params(input_dim, hidden, num_layers, num_steps, num_classes, neuron, rng):
    """Uniform initialization in ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]``; zero head bias."""

    def uniform(shape):
        bound = 1.0 / np.sqrt(shape[-1])
        return rng.uniform(-bound, bound, size=shape)

    W1 = uniform((hidden, hidden))
    F = [uniform((hidden, input_dim))] + [uniform((hidden, hidden)) for _ in range(num_layers - 1)]
    head_W = uniform((num_classes, num_steps * hidden)).T.copy()
    return ModelParams(W1, F, head_W, np.zeros(num_classes), neuron)


@dataclass(frozen=True, eq=False)
class LayerState:
    u: tuple
    s: tuple
    acc: tuple

    @classmethod
    def initial(cls, num_nodes, hidden, num_layers, carry=None):
        """Start-of-window state: membranes hold the carried rates, no spikes."""
        shape = (num_nodes, hidden)
        if carry is None:
            u = tuple(np.zeros(shape) for _ in range(num_layers))
        else:
            if len(carry) != num_layers:
                raise ValidationError(f"carry has {len(carry)} layers, model has {num_layers}")
            u = []
            for l, a in enumerate(carry):
                a = np.asarray(a, dtype=np.float64)
                if a.shape != shape:
                    raise ValidationError(f"carry for layer {l + 1} must have shape {shape}, got {a.shape}")
                u.append(a.copy())
            u = tuple(u)
        s = tuple(np.zeros(shape) for _ in range(num_layers))
        acc = tuple(RateAccumulator.zeros(shape) for _ in range(num_layers))
        return cls(u, s, acc)

    @property
    def rates(self):
        return [a.rate for a in self.acc]


def forward_latency_step(state, x_slice, A_hat, params):
    """Advance every layer by one latency step."""
    cfg = params.neuron
    n = A_hat.shape[0]
    if x_slice.shape != (n, params.input_dim):
        raise ValidationError(f"input slice must have shape {(n, params.input_dim)}, got {x_slice.shape}")
    if state.u[0].shape != (n, params.hidden) or len(state.u) != params.num_layers:
        raise ValidationError("layer state does not match graph size / model shape")
    u_new, s_new, acc_new = [], [], []
    feedback = A_hat @ state.s[-1]
    for l in range(params.num_layers):
        if l == 0:
            current = feedback @ params.W1.T + (A_hat @ x_slice) @ params.F[0].T
        else:
            current = (A_hat @ s_new[l - 1]) @ params.F[l].T
        u, s = lif_step(state.u[l], state.s[l], current, cfg)
        u_new.append(u)
        s_new.append(s)
        acc_new.append(rate_update(state.acc[l], s, cfg.lam))
    return LayerState(tuple(u_new), tuple(s_new), tuple(acc_new))


@dataclass(frozen=True, eq=False)
class TimestepRecord:
    """Everything the trace-form gradient needs from one time step.

    Arrays are indexed ``[layer][latency]`` with latency 0 meaning step 1.
    """

    u: list  # per layer (K, n, h)
    s: list  # per layer (K, n, h)
    trace: list  # per layer (K, n, h) presynaptic traces after each step
    x: np.ndarray  # (K, n, d) input slices
    x_trace: np.ndarray  # (K, n, d)
    A_hat: object


@dataclass(frozen=True, eq=False)
class EquilibriumSummary:
    rates: list
    x_bar: np.ndarray
    residual: float
    record: Optional[TimestepRecord] = None


def input_slices(X, K, rng=None, direct=False):
    if direct:
        return np.broadcast_to(np.asarray(X, dtype=np.float64), (K,) + X.shape)
    return bernoulli_encode(X, K, rng)


def forward_timestep(snapshot, carry, params, rng_seed=None, direct=False, record=False, slices=None):
    """Run one latency window on one snapshot.

    ``slices`` overrides the input encoding with a precomputed ``(K, n, d)``
    array.  With ``direct=True`` the real-valued features are injected as a
    constant current at every latency step instead of Bernoulli spikes.
    """
    cfg = params.neuron
    K = cfg.K
    A_hat = snapshot.norm_adjacency
    n = A_hat.shape[0]
    if slices is None:
        slices = input_slices(snapshot.features, K, rng_seed, direct)
    elif slices.shape != (K, n, params.input_dim):
        raise ValidationError(f"slices must have shape {(K, n, params.input_dim)}")
    state = LayerState.initial(n, params.hidden, params.num_layers, carry)
    x_acc = RateAccumulator.zeros(slices.shape[1:])
    if record:
        L = params.num_layers
        rec_u = [np.empty((K, n, params.hidden)) for _ in range(L)]
        rec_s = [np.empty((K, n, params.hidden)) for _ in range(L)]
        rec_tr = [np.empty((K, n, params.hidden)) for _ in range(L)]
        rec_xtr = np.empty(slices.shape)
    for k in range(K):
        state = forward_latency_step(state, slices[k], A_hat, params)
        x_acc = rate_update(x_acc, slices[k], cfg.lam)
        if record:
            for l in range(params.num_layers):
                rec_u[l][k] = state.u[l]
                rec_s[l][k] = state.s[l]
                rec_tr[l][k] = state.acc[l].trace
            rec_xtr[k] = x_acc.trace
    rates = state.rates
    x_bar = x_acc.rate
    residual = equilibrium_residual(rates, x_bar, A_hat, params)
    rec = None
    if record:
        rec = TimestepRecord(rec_u, rec_s, rec_tr, np.array(slices), rec_xtr, A_hat)
    return EquilibriumSummary(rates, x_bar, residual, rec)


def equilibrium_residual(rates, x_bar, A_hat, params):
    """Max-norm distance of ``rates`` from the clamped block fixed-point map."""
    v_th = params.neuron.v_th
    target = clamp_sigma(((A_hat @ rates[-1]) @ params.W1.T + (A_hat @ x_bar) @ params.F[0].T) / v_th)
    r = float(np.max(np.abs(rates[0] - target), initial=0.0))
    for l in range(1, params.num_layers):
        target = clamp_sigma(((A_hat @ rates[l - 1]) @ params.F[l].T) / v_th)
        r = max(r, float(np.max(np.abs(rates[l] - target), initial=0.0)))
    return r


def run_dynamic(graph, params, rng=None, direct=False, record=False, carry=True):
    """Forward every snapshot in order, carrying each step's rates forward.

    With ``carry=False`` every step starts from zero membranes.
    """
    if graph.num_steps != params.num_steps:
        raise ValidationError(f"model expects {params.num_steps} time steps, graph has {graph.num_steps}")
    summaries = []
    prev = None
    for snap in graph.snapshots:
        summary = forward_timestep(snap, prev if carry else None, params, rng, direct=direct, record=record)
        summaries.append(summary)
        prev = summary.rates
    return summaries


def head_input(equilibria):
    """Concatenate the last-layer rates of every time step, ``(n, T * hidden)``."""
    return np.concatenate([e.rates[-1] for e in equilibria], axis=1)


def softmax(logits):
    with np.errstate(over="ignore"):  # a gap beyond float range underflows to probability 0
        z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def head_logits(Z, params):
    if Z.shape[1] != params.head_W.shape[0]:
        raise ValidationError(f"head expects width {params.head_W.shape[0]}, got {Z.shape[1]}")
    return Z @ params.head_W + params.head_b


def classify(equilibria, params):
    """Class probabilities, one row per node."""
    if len(equilibria) != params.num_steps:
        raise ValidationError(f"head expects {params.num_steps} time steps, got {len(equilibria)}")
    return softmax(head_logits(head_input(equilibria), params))
