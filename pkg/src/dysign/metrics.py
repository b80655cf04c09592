"""Classification metrics, stratified splits and the leak-factor sweep."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .errors import ValidationError
from .model import classify, run_dynamic

STANDARD_TRAIN_RATIOS = (0.4, 0.6, 0.8)


def macro_micro_f1(pred, truth, mask=None, num_classes=None):
    """Macro- and micro-averaged F1 over the masked entries.

    Classes ``0 .. num_classes-1`` all enter the macro average; a class that
    is neither predicted nor present scores 0.
    """
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if mask is None:
        mask = np.ones(truth.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValidationError("metric mask is empty")
    p, y = pred[mask], truth[mask]
    if num_classes is None:
        num_classes = int(max(p.max(), y.max())) + 1
    conf = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(conf, (y, p), 1)
    tp = np.diag(conf).astype(np.float64)
    fp = conf.sum(axis=0) - tp
    fn = conf.sum(axis=1) - tp
    denom = 2 * tp + fp + fn
    per_class = np.divide(2 * tp, denom, out=np.zeros_like(tp), where=denom > 0)
    macro = float(per_class.mean())
    total_tp = tp.sum()
    micro = float(2 * total_tp / (2 * total_tp + fp.sum() + fn.sum()))
    return macro, micro


@dataclass(frozen=True)
class SplitSpec:
    train_ratio: float = 0.4
    val_ratio: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if not (0 < self.train_ratio < 1 and 0 <= self.val_ratio < 1):
            raise ValidationError("ratios must lie in (0, 1)")
        if self.train_ratio + self.val_ratio > 1:
            raise ValidationError("train and validation ratios sum above 1")


def _allocate(quota, cap, total):
    """Largest-remainder apportionment of ``total`` slots to ``quota``, capped by ``cap``."""
    base = np.minimum(np.floor(quota).astype(np.int64), cap)
    short = total - base.sum()
    order = np.lexsort((np.arange(quota.size), -(quota - base)))
    for c in order:
        if short <= 0:
            break
        if base[c] < cap[c]:
            base[c] += 1
            short -= 1
    return base


def make_splits(graph, spec):
    """Stratified train/val/test masks over labeled nodes, deterministic per seed."""
    labels = np.asarray(graph.labels)
    labeled = np.flatnonzero(labels >= 0)
    if labeled.size < 20:
        raise ValidationError(f"need at least 20 labeled nodes, got {labeled.size}")
    rng = rngmod.stream(spec.seed, "split")
    n = labeled.size
    n_train = int(round(spec.train_ratio * n))
    n_val = int(round(spec.val_ratio * n))
    masks = {k: np.zeros(labels.size, dtype=bool) for k in ("train", "val", "test")}

    classes = np.unique(labels[labeled])
    counts = np.array([(labels == c).sum() for c in classes])
    if counts.min() < 3:
        warnings.warn("a class has fewer nodes than split slots; using an unstratified split", stacklevel=2)
        order = rng.permutation(labeled)
        masks["train"][order[:n_train]] = True
        masks["val"][order[n_train : n_train + n_val]] = True
        masks["test"][order[n_train + n_val :]] = True
        return masks

    train_c = _allocate(counts * spec.train_ratio, counts, n_train)
    val_c = _allocate(counts * spec.val_ratio, counts - train_c, n_val)
    for c, k_tr, k_va in zip(classes, train_c, val_c):
        members = rng.permutation(np.flatnonzero(labels == c))
        masks["train"][members[:k_tr]] = True
        masks["val"][members[k_tr : k_tr + k_va]] = True
        masks["test"][members[k_tr + k_va :]] = True
    return masks


def predict_proba(graph, params, seed, direct=False):
    """Class probabilities from a forward pass with a fresh evaluation encoder.

    The encoder is re-created from ``seed`` on every call so that repeated
    evaluations of the same parameters agree exactly.
    """
    enc = None if direct else rngmod.stream(seed, "eval")
    return classify(run_dynamic(graph, params, enc, direct=direct), params)


def evaluate(graph, params, seed, mask="test", direct=False):
    probs = predict_proba(graph, params, seed, direct)
    return macro_micro_f1(probs.argmax(axis=1), graph.labels, graph.mask(mask), graph.num_classes)


def majority_baseline(graph, mask="test"):
    """Scores of always predicting the most frequent training class."""
    train = graph.labels[graph.mask("train")]
    majority = int(np.bincount(train, minlength=graph.num_classes).argmax())
    pred = np.full(graph.num_nodes, majority)
    return macro_micro_f1(pred, graph.labels, graph.mask(mask), graph.num_classes)


def lambda_sweep(graph, cfg, values=None, mask="test"):
    """Train one model per leak factor with a shared seed; one row per value."""
    from .training import train, with_lambda

    values = cfg.lambda_values if values is None else tuple(values)
    if not values:
        raise ValidationError("lambda sweep needs at least one value")
    rows = []
    for lam in values:
        run = train(graph, with_lambda(cfg, lam))
        macro, micro = evaluate(graph, run.params, cfg.seed, mask, cfg.direct)
        rows.append({"lambda": float(lam), "macro_f1": macro, "micro_f1": micro})
    return rows


def write_table(rows, tsv_path=None, json_path=None):
    if not rows:
        raise ValidationError("no rows to write")
    cols = list(rows[0])
    if tsv_path is not None:
        lines = ["\t".join(cols)] + ["\t".join(repr(r[c]) if isinstance(r[c], float) else str(r[c]) for c in cols) for r in rows]
        Path(tsv_path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    if json_path is not None:
        Path(json_path).write_text(json.dumps(rows, indent=2) + "\n", encoding="utf-8")
