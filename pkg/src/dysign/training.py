"""Optimizers and the epoch loop.

Each optimizer step runs the full graph forward twice: a first pass keeps
only the per-step rates needed by the head, a second pass re-simulates one
time step at a time with recording switched on and accumulates that step's
trace-form gradient.  The encoder state is snapshotted before each step so
the second pass sees the same spikes, and memory stays bounded by a single
time step's record.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import rng as rngmod
from .errors import DivergenceError, ValidationError
from .gradients import GradientBundle, head_backward, output_spike_grads, variation_gradient
from .metrics import evaluate
from .model import forward_timestep, init_params, input_slices
from .neuron import NeuronConfig

log = logging.getLogger(__name__)

LAMBDA_SWEEP = (0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2)
OPTIMIZERS = ("adam", "sgd")
ENCODINGS = ("bernoulli", "direct")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.001
    epochs: int = 100
    batch_size: int = 1024
    hidden: int = 128
    num_layers: int = 2
    optimizer: str = "adam"
    seed: int = 0
    lambda_values: tuple = LAMBDA_SWEEP
    neuron: NeuronConfig = field(default_factory=NeuronConfig)
    encoding: str = "bernoulli"
    patience: Optional[int] = None
    checkpoint_every: Optional[int] = None
    log_wall_time: bool = True

    def __post_init__(self):
        if not self.lr > 0:
            raise ValidationError("lr must be positive")
        for name in ("batch_size", "hidden", "num_layers"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be positive")
        if self.epochs < 0:
            raise ValidationError("epochs must be nonnegative")
        if self.optimizer not in OPTIMIZERS:
            raise ValidationError(f"optimizer must be one of {OPTIMIZERS}")
        if self.encoding not in ENCODINGS:
            raise ValidationError(f"encoding must be one of {ENCODINGS}")
        if not self.lambda_values:
            raise ValidationError("lambda_values must be nonempty")
        if self.patience is not None and self.patience < 1:
            raise ValidationError("patience must be positive")
        object.__setattr__(self, "lambda_values", tuple(float(v) for v in self.lambda_values))

    @property
    def direct(self):
        return self.encoding == "direct"

    def to_dict(self):
        out = asdict(self)
        out["lambda_values"] = list(self.lambda_values)
        return out

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        neuron = NeuronConfig(**data.pop("neuron", {}))
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown TrainConfig keys {sorted(unknown)}")
        return cls(neuron=neuron, **data)


class SGD:
    kind = "sgd"

    def __init__(self, lr):
        self.lr = lr
        self.t = 0

    def step(self, arrays, grads):
        self.t += 1
        for name, p in arrays.items():
            p -= self.lr * grads[name]

    def state_dict(self):
        return {"t": self.t}, {}

    def load_state(self, scalars, arrays):
        self.t = int(scalars["t"])


class Adam:
    kind = "adam"

    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, arrays, grads):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name, p in arrays.items():
            g = grads[name]
            m = self.m.setdefault(name, np.zeros_like(p))
            v = self.v.setdefault(name, np.zeros_like(p))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_dict(self):
        arrays = {f"m/{k}": v for k, v in self.m.items()}
        arrays.update({f"v/{k}": v for k, v in self.v.items()})
        return {"t": self.t, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps}, arrays

    def load_state(self, scalars, arrays):
        self.t = int(scalars["t"])
        self.beta1, self.beta2, self.eps = scalars["beta1"], scalars["beta2"], scalars["eps"]
        self.m = {k[2:]: v.copy() for k, v in arrays.items() if k.startswith("m/")}
        self.v = {k[2:]: v.copy() for k, v in arrays.items() if k.startswith("v/")}


def make_optimizer(kind, lr):
    return Adam(lr) if kind == "adam" else SGD(lr)


@dataclass(eq=False)
class TrainRun:
    config: TrainConfig
    params: object
    optimizer: object
    rngs: dict
    metrics: list
    masks: dict
    graph_shape: dict
    epoch: int = 0

    @property
    def rng_states(self):
        return {k: rngmod.get_state(g) for k, g in self.rngs.items()}


def graph_shape(graph):
    return {
        "num_nodes": graph.num_nodes,
        "num_steps": graph.num_steps,
        "feature_dim": graph.feature_dim,
        "num_classes": graph.num_classes,
    }


def param_norms(params):
    return {k: float(np.linalg.norm(v)) for k, v in params.arrays().items()}


def compute_gradient(graph, params, batch_mask, encoder, direct=False):
    """Loss and full gradient bundle for one optimizer step."""
    states, rates = [], []
    prev = None
    for snap in graph.snapshots:
        states.append(None if direct else rngmod.get_state(encoder))
        summary = forward_timestep(snap, prev, params, encoder, direct=direct)
        rates.append(summary.rates)
        prev = summary.rates
    Z = np.concatenate([r[-1] for r in rates], axis=1)
    loss, probs, dW, db, dZ = head_backward(Z, params, graph.labels, batch_mask)
    grads = {name: np.zeros_like(a) for name, a in params.arrays().items()}
    grads["head_W"], grads["head_b"] = dW, db
    h = params.hidden
    for t, snap in enumerate(graph.snapshots):
        gen = None if direct else rngmod.from_state(states[t])
        slices = input_slices(snap.features, params.neuron.K, gen, direct)
        carry = rates[t - 1] if t > 0 else None
        summary = forward_timestep(snap, carry, params, slices=slices, record=True)
        g_out = output_spike_grads(dZ[:, t * h : (t + 1) * h], params.neuron)
        step = variation_gradient([summary.record], [g_out], params)
        for name, g in step.grads.items():
            grads[name] += g
    return GradientBundle(grads, loss), probs


def _write_jsonl(path, record):
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, sort_keys=False) + "\n")


def train(graph, cfg, out_dir=None):
    """Train a model on ``graph`` (whose ``train`` mask must be nonempty).

    When ``out_dir`` is given, per-epoch metrics are appended to
    ``metrics.jsonl`` and the final state is written to ``checkpoint.ckpt``.
    """
    from .checkpoint import save_checkpoint

    train_mask = graph.mask("train")
    if not train_mask.any():
        raise ValidationError("graph has an empty train mask")
    rngs = {name: rngmod.stream(cfg.seed, name) for name in ("init", "encode", "batch")}
    neuron = cfg.neuron
    params = init_params(
        graph.feature_dim, cfg.hidden, cfg.num_layers, graph.num_steps, graph.num_classes, neuron, rngs["init"]
    )
    run = TrainRun(
        config=cfg,
        params=params,
        optimizer=make_optimizer(cfg.optimizer, cfg.lr),
        rngs=rngs,
        metrics=[],
        masks={k: np.array(v) for k, v in graph.split_masks.items()},
        graph_shape=graph_shape(graph),
    )
    metrics_path = ckpt_path = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        metrics_path = out_dir / "metrics.jsonl"
        metrics_path.write_text("", encoding="utf-8")
        ckpt_path = out_dir / "checkpoint.ckpt"

    train_idx = np.flatnonzero(train_mask)
    has_val = graph.mask("val").any()
    best, stale = -np.inf, 0
    for epoch in range(1, cfg.epochs + 1):
        start = time.perf_counter()
        order = rngs["batch"].permutation(train_idx)
        losses = []
        for lo in range(0, order.size, cfg.batch_size):
            batch = np.zeros(graph.num_nodes, dtype=bool)
            batch[order[lo : lo + cfg.batch_size]] = True
            with np.errstate(over="ignore", invalid="ignore"):  # non-finite values are caught below
                bundle, _ = compute_gradient(graph, run.params, batch, rngs["encode"], cfg.direct)
            finite = np.isfinite(bundle.loss) and all(np.all(np.isfinite(g)) for g in bundle.grads.values())
            if not finite:
                raise DivergenceError(f"non-finite loss or gradient at epoch {epoch}", param_norms(run.params))
            run.optimizer.step(run.params.arrays(), bundle.grads)
            if not all(np.all(np.isfinite(a)) for a in run.params.arrays().values()):
                raise DivergenceError(f"non-finite parameters after a step at epoch {epoch}", param_norms(run.params))
            losses.append(bundle.loss)
        if has_val:
            with np.errstate(over="ignore", invalid="ignore"):
                val_macro, val_micro = evaluate(graph, run.params, cfg.seed, "val", cfg.direct)
        else:
            val_macro = val_micro = None
        wall_ms = round((time.perf_counter() - start) * 1000.0, 3) if cfg.log_wall_time else None
        record = {
            "epoch": epoch,
            "loss": float(np.mean(losses)),
            "val_macro_f1": val_macro,
            "val_micro_f1": val_micro,
            "wall_ms": wall_ms,
        }
        run.metrics.append(record)
        run.epoch = epoch
        log.info("epoch %d loss %.5f val macro %s", epoch, record["loss"], val_macro)
        if metrics_path is not None:
            _write_jsonl(metrics_path, record)
            if cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0:
                save_checkpoint(ckpt_path, run)
        if cfg.patience and has_val:
            if val_macro > best:
                best, stale = val_macro, 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    break
    if ckpt_path is not None:
        save_checkpoint(ckpt_path, run)
    return run


def with_lambda(cfg, lam):
    return replace(cfg, neuron=replace(cfg.neuron, lam=float(lam)))
