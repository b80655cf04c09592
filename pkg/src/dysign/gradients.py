"""Loss, trace-form parameter gradients and the oracles that check them.

Backward conventions
--------------------
Inside a latency window the reset path is treated as constant (the product
``du[k+1]/ds[k] * ds[k]/du[k]`` is dropped) and the spike function uses the
rectangular surrogate.  The carried membrane initialization of step
``t + 1`` is treated as a constant as well, so each time step contributes
its own gradient and the per-step contributions are summed.

Under these rules the weight gradient of any synapse group equals::

    sum_tau  delta[tau]^T @ (A_hat @ trace[tau])

where ``delta[tau] = dL/ds[tau] * surrogate(u[tau])`` for the postsynaptic
layer and ``trace[tau] = sum_{k <= tau} lam**(tau - k) * pre[k]`` is the
leaky presynaptic trace accumulated during the forward pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .model import forward_timestep, head_input, head_logits, softmax
from .neuron import surrogate_derivative

LOG_FLOOR = 1e-12


@dataclass(eq=False)
class GradientBundle:
    grads: dict
    loss: float = float("nan")

    def __getitem__(self, name):
        return self.grads[name]

    def max_relative_deviation(self, other):
        """``max_name ||a - b|| / max(||a||, ||b||)`` over shared arrays (0 when both vanish)."""
        worst = 0.0
        for name, a in self.grads.items():
            b = other.grads[name]
            scale = max(np.linalg.norm(a), np.linalg.norm(b))
            if scale > 0:
                worst = max(worst, float(np.linalg.norm(a - b) / scale))
        return worst


def _checked_mask(labels, mask):
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValidationError("loss mask is empty")
    if np.any(labels[mask] < 0):
        raise ValidationError("masked nodes must carry a label")
    return mask


def cross_entropy(probs, labels, mask):
    """Mean negative log-probability of the true class over masked nodes."""
    labels = np.asarray(labels)
    mask = _checked_mask(labels, mask)
    p_true = probs[mask, labels[mask]]
    return float(np.mean(-np.log(np.maximum(p_true, LOG_FLOOR))))


def head_backward(Z, params, labels, mask):
    """Loss and gradients of the linear head plus softmax cross-entropy.

    Returns ``(loss, probs, d_head_W, d_head_b, dZ)``.
    """
    labels = np.asarray(labels)
    mask = _checked_mask(labels, mask)
    probs = softmax(head_logits(Z, params))
    loss = cross_entropy(probs, labels, mask)
    dlogits = np.zeros_like(probs)
    rows = np.flatnonzero(mask)
    dlogits[rows] = probs[rows]
    dlogits[rows, labels[rows]] -= 1.0
    dlogits /= rows.size
    return loss, probs, Z.T @ dlogits, dlogits.sum(axis=0), dlogits @ params.head_W.T


def output_spike_grads(d_rates, neuron):
    """Spread ``dL/d rate`` over the latency steps: ``dL/ds[tau] = dL/da * lam**(K-tau) / C``."""
    K = neuron.K
    weights = neuron.lam ** np.arange(K - 1, -1, -1, dtype=np.float64) / neuron.normalizer
    return weights[:, None, None] * d_rates[None]


def spike_adjoints(record, g_out, params):
    """Per-layer ``delta[tau]`` for one time step, shape ``(K, n, h)`` each.

    ``g_out`` is ``dL/ds`` of the last layer coming from the head.  Lower
    layers receive gradient through the feedforward matrices; the last layer
    additionally through the feedback into layer 1 at the next latency step.
    """
    cfg = params.neuron
    if cfg.reset_mode != "soft":
        raise ValidationError("the trace-form gradient is defined for soft reset only")
    if record is None:
        raise ValidationError("forward record missing; run the forward pass with record=True")
    A_hat = record.A_hat
    L, K = params.num_layers, cfg.K
    lam = cfg.lam
    delta = [np.empty_like(record.u[l]) for l in range(L)]
    ubar_next = [np.zeros_like(record.u[l][0]) for l in range(L)]
    for k in range(K - 1, -1, -1):
        ubar = [None] * L
        for l in range(L - 1, -1, -1):
            gs = g_out[k].copy() if l == L - 1 else A_hat.T @ (ubar[l + 1] @ params.F[l + 1])
            if l == L - 1 and k < K - 1:
                gs += A_hat.T @ (ubar_next[0] @ params.W1)
            d = gs * surrogate_derivative(record.u[l][k], cfg)
            delta[l][k] = d
            ubar[l] = d + lam * ubar_next[l]
        ubar_next = ubar
    return delta


def _presynaptic(record, params):
    """Presynaptic trace sequences (unaggregated) for W1, F1, F2..FN."""
    last = record.trace[-1]
    shifted = np.concatenate([np.zeros_like(last[:1]), last[:-1]], axis=0)
    pres = {"W1": shifted, "F1": record.x_trace}
    for l in range(1, params.num_layers):
        pres[f"F{l + 1}"] = record.trace[l - 1]
    return pres


def _post_layer(name):
    return 0 if name in ("W1", "F1") else int(name[1:]) - 1


def _contract(delta, A_hat, pre):
    out = np.zeros((delta.shape[2], pre.shape[2]))
    for k in range(delta.shape[0]):
        out += delta[k].T @ (A_hat @ pre[k])
    return out


def variation_gradient(records, loss_grads, params):
    """Trace-form gradients of the spiking parameters, summed over time steps.

    ``records`` holds one forward record per time step and ``loss_grads`` the
    matching ``(K, n, h)`` arrays of ``dL/ds`` at the last layer.
    """
    if len(records) != len(loss_grads):
        raise ValidationError("one loss-gradient array is needed per recorded time step")
    grads = {name: np.zeros_like(arr) for name, arr in params.arrays().items() if not name.startswith("head")}
    for record, g_out in zip(records, loss_grads):
        delta = spike_adjoints(record, g_out, params)
        for name, pre in _presynaptic(record, params).items():
            grads[name] += _contract(delta[_post_layer(name)], record.A_hat, pre)
    return GradientBundle(grads)


def _explicit_trace(seq, lam, shift=False):
    """``sum_{k <= tau} lam**(tau - k) * seq[k]`` evaluated term by term."""
    K = seq.shape[0]
    if shift:
        seq = np.concatenate([np.zeros_like(seq[:1]), seq[:-1]], axis=0)
    out = np.zeros_like(seq)
    for tau in range(K):
        for k in range(tau + 1):
            out[tau] += lam ** (tau - k) * seq[k]
    return out


def variation_gradient_double_sum(records, loss_grads, params):
    """Same quantity as :func:`variation_gradient` via the explicit double sum
    over spikes instead of the forward-accumulated traces."""
    lam = params.neuron.lam
    grads = {name: np.zeros_like(arr) for name, arr in params.arrays().items() if not name.startswith("head")}
    for record, g_out in zip(records, loss_grads):
        delta = spike_adjoints(record, g_out, params)
        pres = {"W1": _explicit_trace(record.s[-1], lam, shift=True), "F1": _explicit_trace(record.x, lam)}
        for l in range(1, params.num_layers):
            pres[f"F{l + 1}"] = _explicit_trace(record.s[l - 1], lam)
        for name, pre in pres.items():
            post = delta[_post_layer(name)]
            for tau in range(post.shape[0]):
                grads[name] += post[tau].T @ (record.A_hat @ pre[tau])
    return GradientBundle(grads)


@dataclass(eq=False)
class Instance:
    """A fixed, fully specified forward problem: graphs, encoded inputs, labels."""

    A_hats: list
    slices: list  # per time step (K, n, d)
    labels: np.ndarray
    mask: np.ndarray

    @property
    def num_nodes(self):
        return self.A_hats[0].shape[0]


class _Snap:
    __slots__ = ("norm_adjacency", "features")

    def __init__(self, A_hat, features):
        self.norm_adjacency = A_hat
        self.features = features


def forward_records(instance, params):
    """Run the recorded forward pass over all time steps of ``instance``."""
    summaries = []
    prev = None
    for A_hat, sl in zip(instance.A_hats, instance.slices):
        summary = forward_timestep(_Snap(A_hat, sl[0]), prev, params, slices=sl, record=True)
        summaries.append(summary)
        prev = summary.rates
    return summaries


def full_gradient(summaries, params, labels, mask):
    """Loss plus gradients for every parameter given recorded summaries."""
    Z = head_input(summaries)
    loss, probs, dW, db, dZ = head_backward(Z, params, labels, mask)
    h = params.hidden
    loss_grads = [output_spike_grads(dZ[:, t * h : (t + 1) * h], params.neuron) for t in range(len(summaries))]
    bundle = variation_gradient([s.record for s in summaries], loss_grads, params)
    bundle.grads["head_W"] = dW
    bundle.grads["head_b"] = db
    bundle.loss = loss
    return bundle, probs


def instance_gradient(instance, params, method="trace"):
    summaries = forward_records(instance, params)
    if method == "trace":
        bundle, _ = full_gradient(summaries, params, instance.labels, instance.mask)
        return bundle
    if method != "double_sum":
        raise ValueError(f"unknown method {method!r}")
    Z = head_input(summaries)
    loss, _, dW, db, dZ = head_backward(Z, params, instance.labels, instance.mask)
    h = params.hidden
    loss_grads = [output_spike_grads(dZ[:, t * h : (t + 1) * h], params.neuron) for t in range(len(summaries))]
    bundle = variation_gradient_double_sum([s.record for s in summaries], loss_grads, params)
    bundle.grads.update(head_W=dW, head_b=db)
    bundle.loss = loss
    return bundle


ORACLE_LIMITS = {"num_nodes": 32, "num_layers": 2, "K": 8}


def bptt_oracle(instance, params):
    """Gradient by full unrolling of the forward graph under torch autograd.

    Uses the same surrogate and the same detached reset and carry paths as
    the trace-form gradient, but none of its code.  Test-scale only.
    """
    import torch

    cfg = params.neuron
    sizes = {"num_nodes": instance.num_nodes, "num_layers": params.num_layers, "K": cfg.K}
    for key, limit in ORACLE_LIMITS.items():
        if sizes[key] > limit:
            raise ValidationError(f"bptt_oracle refuses {key}={sizes[key]} > {limit}")

    v_th, gamma, lam, K = cfg.v_th, cfg.width, cfg.lam, cfg.K

    class Spike(torch.autograd.Function):
        @staticmethod
        def forward(ctx, u):
            ctx.save_for_backward(u)
            return (u >= v_th).to(u.dtype)

        @staticmethod
        def backward(ctx, g):
            (u,) = ctx.saved_tensors
            return g * ((u - v_th).abs() <= gamma).to(u.dtype) / (2.0 * gamma)

    tp = {k: torch.tensor(v, dtype=torch.float64, requires_grad=True) for k, v in params.arrays().items()}
    L = params.num_layers
    F = [tp[f"F{l}"] for l in range(1, L + 1)]
    weights = torch.tensor([lam ** (K - 1 - k) for k in range(K)], dtype=torch.float64)
    C = weights.sum()
    carry = None
    rates_last = []
    spikes_all = []
    for A_hat, sl in zip(instance.A_hats, instance.slices):
        A = torch.tensor(A_hat.toarray(), dtype=torch.float64)
        x = torch.tensor(np.asarray(sl), dtype=torch.float64)
        n = A.shape[0]
        u = [carry[l] if carry is not None else torch.zeros(n, params.hidden, dtype=torch.float64) for l in range(L)]
        s = [torch.zeros(n, params.hidden, dtype=torch.float64) for _ in range(L)]
        hist = [[] for _ in range(L)]
        for k in range(K):
            new_s = []
            for l in range(L):
                if l == 0:
                    cur = (A @ s[-1]) @ tp["W1"].T + (A @ x[k]) @ F[0].T
                else:
                    cur = (A @ new_s[l - 1]) @ F[l].T
                if cfg.reset_mode == "soft":
                    u[l] = lam * (u[l] - v_th * s[l].detach()) + cur
                else:
                    u[l] = lam * u[l] * (1.0 - s[l].detach()) + cur
                new_s.append(Spike.apply(u[l]))
                hist[l].append(new_s[l])
            s = new_s
        rates = [sum(weights[k] * hist[l][k] for k in range(K)) / C for l in range(L)]
        spikes_all.append([torch.stack(h).detach().numpy() for h in hist])
        rates_last.append(rates[-1])
        carry = [r.detach() for r in rates]
    Z = torch.cat(rates_last, dim=1)
    logits = Z @ tp["head_W"] + tp["head_b"]
    logp = torch.log_softmax(logits, dim=1)
    rows = torch.tensor(np.flatnonzero(instance.mask))
    labels = torch.tensor(np.asarray(instance.labels))[rows]
    loss = -logp[rows, labels].mean()
    loss.backward()
    grads = {k: v.grad.detach().numpy().copy() for k, v in tp.items()}
    bundle = GradientBundle(grads, float(loss.detach()))
    bundle.spikes = spikes_all
    return bundle


def finite_difference_check(Z, params, labels, mask, eps=1e-5):
    """Max deviation between central differences and the analytic head gradient.

    The deviation is normalized by the largest analytic entry, so it stays
    meaningful when individual entries vanish.
    """
    labels = np.asarray(labels)
    _, _, dW, db, _ = head_backward(Z, params, labels, mask)

    def loss_at(W, b):
        logits = Z @ W + b
        return cross_entropy(softmax(logits), labels, mask)

    W = params.head_W.copy()
    b = params.head_b.copy()
    num_W = np.empty_like(W)
    for idx in np.ndindex(W.shape):
        orig = W[idx]
        W[idx] = orig + eps
        plus = loss_at(W, b)
        W[idx] = orig - eps
        minus = loss_at(W, b)
        W[idx] = orig
        num_W[idx] = (plus - minus) / (2 * eps)
    num_b = np.empty_like(b)
    for i in range(b.size):
        orig = b[i]
        b[i] = orig + eps
        plus = loss_at(W, b)
        b[i] = orig - eps
        minus = loss_at(W, b)
        b[i] = orig
        num_b[i] = (plus - minus) / (2 * eps)
    scale = max(np.abs(dW).max(initial=0.0), np.abs(db).max(initial=0.0))
    dev = max(np.abs(num_W - dW).max(initial=0.0), np.abs(num_b - db).max(initial=0.0))
    return dev / scale if scale > 0 else dev
