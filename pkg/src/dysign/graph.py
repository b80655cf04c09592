"""Dynamic graph containers, file ingestion and normalization.

A :class:`DynamicGraph` is an ordered, immutable list of :class:`Snapshot`
objects over a fixed node universe.  Each snapshot carries the raw binary
adjacency, the self-loop symmetric normalization consumed by the model and
a dense feature matrix scaled into ``[0, 1]`` so that it can be used as
Bernoulli firing probabilities.

File formats (UTF-8, ``#`` starts a comment line)::

    edges     src<TAB>dst<TAB>timestamp
    labels    node<TAB>class
    features  node<TAB>v1,v2,...,vd            (same features at every step)
              node<TAB>timestamp<TAB>v1,...,vd (per-step features)
    manifest  {"num_nodes": ..., "num_steps": ..., "num_classes": ..., "feature_dim": ...}
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import DataError, NodeIndexError, ParseError, ValidationError

MODES = ("cumulative", "windowed")
SPLITS = ("train", "val", "test")

# Node / edge / class / step counts of the benchmark corpora the method was
# evaluated on.  Used to validate manifests; the corpora are not shipped.
REFERENCE_DATASETS = {
    "dblp": {"num_nodes": 28085, "num_edges": 236894, "num_classes": 10, "num_steps": 27},
    "tmall": {"num_nodes": 577314, "num_edges": 4807545, "num_classes": 5, "num_steps": 186},
    "patent": {"num_nodes": 2738012, "num_edges": 13960811, "num_classes": 6, "num_steps": 25},
}


@dataclass(frozen=True)
class IngestConfig:
    num_nodes: Optional[int] = None
    num_steps: Optional[int] = None
    num_classes: Optional[int] = None
    feature_dim: int = 16
    mode: str = "cumulative"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        for name in ("num_nodes", "num_steps", "num_classes"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ValidationError(f"{name} must be positive, got {value}")
        if self.feature_dim < 1:
            raise ValidationError("feature_dim must be positive")

    @classmethod
    def from_manifest(cls, path, **overrides):
        manifest = load_manifest(path)
        manifest.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**manifest)


def load_manifest(path):
    """Read a dataset manifest and return its keys as a dict."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"manifest not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(path, exc.lineno, f"invalid JSON: {exc.msg}") from None
    allowed = {"num_nodes", "num_steps", "num_classes", "feature_dim"}
    unknown = set(raw) - allowed
    if unknown:
        raise DataError(f"{path}: unknown manifest keys {sorted(unknown)}")
    out = {}
    for key, value in raw.items():
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            raise DataError(f"{path}: manifest field {key} must be a positive integer")
        out[key] = value
    return out


@dataclass(frozen=True, eq=False)
class Snapshot:
    adjacency: sp.csr_matrix
    norm_adjacency: sp.csr_matrix
    features: np.ndarray

    @property
    def num_nodes(self):
        return self.adjacency.shape[0]

    @property
    def num_edges(self):
        """Number of undirected edges, self-loops excluded."""
        upper = sp.triu(self.adjacency, k=1)
        return int(upper.count_nonzero())


@dataclass(frozen=True, eq=False)
class DynamicGraph:
    snapshots: tuple
    labels: np.ndarray
    num_classes: int
    split_masks: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.snapshots) < 1:
            raise ValidationError("a dynamic graph needs at least one snapshot")
        n = self.snapshots[0].num_nodes
        d = self.snapshots[0].features.shape[1]
        for t, snap in enumerate(self.snapshots):
            if snap.num_nodes != n or snap.features.shape != (n, d):
                raise ValidationError(f"snapshot {t} disagrees with node count {n} / feature dim {d}")
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.shape != (n,):
            raise ValidationError(f"labels must have shape ({n},), got {labels.shape}")
        if labels.size and (labels.max(initial=-1) >= self.num_classes or labels.min() < -1):
            raise ValidationError(f"labels must lie in [0, {self.num_classes}) or be -1")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "snapshots", tuple(self.snapshots))

        masks = {}
        taken = np.zeros(n, dtype=bool)
        for name, mask in self.split_masks.items():
            if name not in SPLITS:
                raise ValidationError(f"unknown split {name!r}")
            mask = np.asarray(mask, dtype=bool).copy()
            if mask.shape != (n,):
                raise ValidationError(f"mask {name} must have shape ({n},)")
            if np.any(mask & (labels < 0)):
                raise ValidationError(f"mask {name} contains unlabeled nodes")
            if np.any(mask & taken):
                raise ValidationError("split masks must be disjoint")
            taken |= mask
            mask.setflags(write=False)
            masks[name] = mask
        object.__setattr__(self, "split_masks", masks)

    @property
    def num_nodes(self):
        return self.snapshots[0].num_nodes

    @property
    def num_steps(self):
        return len(self.snapshots)

    @property
    def feature_dim(self):
        return self.snapshots[0].features.shape[1]

    @property
    def labeled(self):
        return self.labels >= 0

    def mask(self, name):
        if name not in SPLITS:
            raise KeyError(name)
        return self.split_masks.get(name, np.zeros(self.num_nodes, dtype=bool))

    def with_splits(self, masks):
        return replace(self, split_masks=dict(masks))

    def permuted(self, perm):
        """Relabel nodes so that old node ``perm[i]`` becomes node ``i``."""
        perm = np.asarray(perm)
        snaps = tuple(make_snapshot(s.adjacency[perm][:, perm], s.features[perm]) for s in self.snapshots)
        masks = {k: v[perm] for k, v in self.split_masks.items()}
        return DynamicGraph(snaps, self.labels[perm], self.num_classes, masks)


def normalize_adjacency(A):
    """Return ``D^-1/2 (A + I) D^-1/2`` with ``D`` the degree matrix of ``A + I``.

    Non-symmetric input is symmetrized by taking the elementwise maximum of
    ``A`` and ``A.T``.
    """
    A = sp.csr_matrix(A, dtype=np.float64)
    if A.shape[0] != A.shape[1]:
        raise ValidationError(f"adjacency must be square, got {A.shape}")
    if A.nnz and A.data.min() < 0:
        raise ValidationError("adjacency weights must be nonnegative")
    if (A != A.T).nnz:
        A = A.maximum(A.T)
    n = A.shape[0]
    A_tilde = (A + sp.identity(n, format="csr")).tocsr()
    deg = np.asarray(A_tilde.sum(axis=1)).ravel()
    d_inv_sqrt = sp.diags(1.0 / np.sqrt(deg))
    out = (d_inv_sqrt @ A_tilde @ d_inv_sqrt).tocsr()
    out.sort_indices()
    return out


def normalize_features(X_raw):
    """Per-column min-max scaling into [0, 1]; constant columns map to 0.5."""
    X = np.asarray(X_raw, dtype=np.float64)
    if X.ndim != 2:
        raise ValidationError(f"features must be a 2-D matrix, got {X.ndim}-D")
    if not np.all(np.isfinite(X)):
        raise ValidationError("features contain NaN or Inf")
    lo = X.min(axis=0, initial=np.inf) if X.shape[0] else np.zeros(X.shape[1])
    hi = X.max(axis=0, initial=-np.inf) if X.shape[0] else np.zeros(X.shape[1])
    span = hi - lo
    const = span == 0
    out = np.empty_like(X)
    varying = ~const
    out[:, varying] = (X[:, varying] - lo[varying]) / span[varying]
    out[:, const] = 0.5
    # guards the (x - lo) / span rounding at the top of the range
    np.clip(out, 0.0, 1.0, out=out)
    return out


def make_snapshot(adjacency, features):
    A = sp.csr_matrix(adjacency, dtype=np.float64)
    A.sort_indices()
    X = normalize_features(features)
    X.setflags(write=False)
    return Snapshot(A, normalize_adjacency(A), X)


def build_adjacency(src, dst, num_nodes):
    """Binary symmetric adjacency from edge endpoint arrays; self-loops dropped."""
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    keep = src != dst
    src, dst = src[keep], dst[keep]
    rows = np.concatenate([src, dst])
    cols = np.concatenate([dst, src])
    A = sp.coo_matrix((np.ones(rows.size), (rows, cols)), shape=(num_nodes, num_nodes)).tocsr()
    A.sum_duplicates()
    A.data[:] = 1.0
    return A


def node_projection(num_nodes, width):
    """Per-node uniform random vectors seeded by node id alone."""
    out = np.empty((num_nodes, width))
    for i in range(num_nodes):
        out[i] = np.random.default_rng([i]).random(width)
    return out


def generated_features(adjacency, dim, projection=None):
    """Degree column plus a fixed random projection seeded by node id.

    Used when a dataset ships without node features.  The random columns only
    depend on the node id, so they are stable across snapshots and runs.
    """
    n = adjacency.shape[0]
    if projection is None:
        projection = node_projection(n, dim - 1)
    X = np.empty((n, dim))
    X[:, 0] = np.asarray(adjacency.sum(axis=1)).ravel()
    X[:, 1:] = projection
    return normalize_features(X)


def _lines(path):
    path = Path(path)
    try:
        fh = path.open(encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"file not found: {path}") from None
    with fh:
        for no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            yield no, line


def _int_field(path, no, token, what):
    try:
        return int(token)
    except ValueError:
        raise ParseError(path, no, f"{what} is not an integer: {token!r}") from None


def read_edges(path):
    """Parse an edge file into ``(src, dst, timestamp)`` int arrays."""
    src, dst, ts = [], [], []
    for no, line in _lines(path):
        parts = line.split("\t") if "\t" in line else line.split()
        if len(parts) != 3:
            raise ParseError(path, no, f"expected src<TAB>dst<TAB>timestamp, got {len(parts)} fields")
        s, d, t = (_int_field(path, no, p.strip(), w) for p, w in zip(parts, ("src", "dst", "timestamp")))
        if s < 0 or d < 0:
            raise NodeIndexError(f"{path}:{no}: negative node id")
        if t < 0:
            raise ParseError(path, no, f"timestamp must be nonnegative, got {t}")
        src.append(s)
        dst.append(d)
        ts.append(t)
    return np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64), np.array(ts, dtype=np.int64)


def read_labels(path):
    nodes, classes = [], []
    for no, line in _lines(path):
        parts = line.split("\t") if "\t" in line else line.split()
        if len(parts) != 2:
            raise ParseError(path, no, f"expected node<TAB>class, got {len(parts)} fields")
        node = _int_field(path, no, parts[0].strip(), "node")
        cls = _int_field(path, no, parts[1].strip(), "class")
        if node < 0:
            raise NodeIndexError(f"{path}:{no}: negative node id")
        if cls < 0:
            raise ParseError(path, no, f"class id must be nonnegative, got {cls}")
        nodes.append(node)
        classes.append(cls)
    return np.array(nodes, dtype=np.int64), np.array(classes, dtype=np.int64)


def read_features(path):
    """Parse a feature file.

    Returns ``(nodes, timestamps, values)`` where ``timestamps`` is ``None``
    for the static two-column layout.
    """
    nodes, stamps, rows = [], [], []
    width = None
    per_step = None
    for no, line in _lines(path):
        parts = line.split("\t")
        if len(parts) not in (2, 3):
            raise ParseError(path, no, "expected node<TAB>v1,...,vd or node<TAB>t<TAB>v1,...,vd")
        if per_step is None:
            per_step = len(parts) == 3
        elif per_step != (len(parts) == 3):
            raise ParseError(path, no, "mixed static and per-step feature lines")
        node = _int_field(path, no, parts[0].strip(), "node")
        if node < 0:
            raise NodeIndexError(f"{path}:{no}: negative node id")
        try:
            values = [float(v) for v in parts[-1].split(",")]
        except ValueError:
            raise ParseError(path, no, "feature values must be comma-separated decimals") from None
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise ParseError(path, no, f"expected {width} feature values, got {len(values)}")
        if per_step:
            stamps.append(_int_field(path, no, parts[1].strip(), "timestamp"))
        nodes.append(node)
        rows.append(values)
    if width is None:
        raise DataError(f"{path}: no feature lines")
    values = np.array(rows, dtype=np.float64)
    return np.array(nodes, dtype=np.int64), (np.array(stamps, dtype=np.int64) if per_step else None), values


def snapshot_edge_sets(src, dst, ts, num_steps, mode="cumulative"):
    """Yield the ``(src, dst)`` arrays active at each step."""
    order = np.argsort(ts, kind="stable")
    src, dst, ts = src[order], dst[order], ts[order]
    for t in range(num_steps):
        if mode == "cumulative":
            end = np.searchsorted(ts, t, side="right")
            yield src[:end], dst[:end]
        else:
            lo, hi = np.searchsorted(ts, t, side="left"), np.searchsorted(ts, t, side="right")
            yield src[lo:hi], dst[lo:hi]


def load_dynamic_graph(edges_path, labels_path, features_path=None, config=None):
    """Load a dynamic graph from edge, label and optional feature files."""
    config = config or IngestConfig()
    src, dst, ts = read_edges(edges_path)
    lab_nodes, lab_classes = read_labels(labels_path)
    feat = read_features(features_path) if features_path is not None else None

    n = config.num_nodes
    if n is None:
        candidates = [src.max(initial=-1), dst.max(initial=-1), lab_nodes.max(initial=-1)]
        if feat is not None:
            candidates.append(feat[0].max(initial=-1))
        n = int(max(candidates)) + 1
        if n < 1:
            raise DataError("cannot infer the node count from empty files")
    for name, ids in (("edges", np.concatenate([src, dst])), ("labels", lab_nodes)):
        if ids.size and ids.max() >= n:
            raise NodeIndexError(f"{name}: node id {int(ids.max())} >= num_nodes {n}")
    if feat is not None and feat[0].size and feat[0].max() >= n:
        raise NodeIndexError(f"features: node id {int(feat[0].max())} >= num_nodes {n}")

    T = config.num_steps
    if T is None:
        T = int(ts.max(initial=0)) + 1
    elif ts.size and ts.max() >= T:
        raise DataError(f"edges: timestamp {int(ts.max())} outside [0, {T})")

    C = config.num_classes
    if C is None:
        C = int(lab_classes.max(initial=0)) + 1
    elif lab_classes.size and lab_classes.max() >= C:
        raise DataError(f"labels: class id {int(lab_classes.max())} >= num_classes {C}")
    labels = np.full(n, -1, dtype=np.int64)
    labels[lab_nodes] = lab_classes

    raw_features = None
    if feat is not None:
        nodes, stamps, values = feat
        raw_features = np.zeros((T, n, values.shape[1]))
        if stamps is None:
            raw_features[:, nodes, :] = values
        else:
            if stamps.size and (stamps.min() < 0 or stamps.max() >= T):
                raise DataError(f"features: timestamp outside [0, {T})")
            raw_features[stamps, nodes, :] = values

    projection = node_projection(n, config.feature_dim - 1) if raw_features is None else None
    snapshots = []
    for t, (s, d) in enumerate(snapshot_edge_sets(src, dst, ts, T, config.mode)):
        A = build_adjacency(s, d, n)
        X = raw_features[t] if raw_features is not None else generated_features(A, config.feature_dim, projection)
        snapshots.append(make_snapshot(A, X))
    return DynamicGraph(tuple(snapshots), labels, C)


def write_dynamic_graph(graph, directory, edges=None):
    """Write ``graph`` in the text formats read by :func:`load_dynamic_graph`.

    ``edges`` is an optional ``(src, dst, timestamp)`` triple; without it the
    first-appearance step of every undirected edge is reconstructed from the
    snapshots (exact for cumulative graphs).
    Returns a dict of written paths.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if edges is None:
        seen = {}
        for t, snap in enumerate(graph.snapshots):
            upper = sp.triu(snap.adjacency, k=1).tocoo()
            for i, j in zip(upper.row.tolist(), upper.col.tolist()):
                seen.setdefault((i, j), t)
        edges = (
            np.array([k[0] for k in seen], dtype=np.int64),
            np.array([k[1] for k in seen], dtype=np.int64),
            np.array(list(seen.values()), dtype=np.int64),
        )
    paths = {k: directory / f"{k}.tsv" for k in ("edges", "labels", "features")}
    paths["manifest"] = directory / "manifest.json"
    with paths["edges"].open("w", encoding="utf-8") as fh:
        fh.write("# src\tdst\ttimestamp\n")
        for s, d, t in zip(*(np.asarray(e).tolist() for e in edges)):
            fh.write(f"{s}\t{d}\t{t}\n")
    with paths["labels"].open("w", encoding="utf-8") as fh:
        for node in np.flatnonzero(graph.labels >= 0).tolist():
            fh.write(f"{node}\t{int(graph.labels[node])}\n")
    with paths["features"].open("w", encoding="utf-8") as fh:
        for t, snap in enumerate(graph.snapshots):
            for node in range(graph.num_nodes):
                fh.write(f"{node}\t{t}\t" + ",".join(repr(float(v)) for v in snap.features[node]) + "\n")
    manifest = {
        "num_nodes": graph.num_nodes,
        "num_steps": graph.num_steps,
        "num_classes": graph.num_classes,
        "feature_dim": graph.feature_dim,
    }
    paths["manifest"].write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return paths


__all__ = [
    "DynamicGraph",
    "IngestConfig",
    "REFERENCE_DATASETS",
    "Snapshot",
    "build_adjacency",
    "generated_features",
    "load_dynamic_graph",
    "load_manifest",
    "make_snapshot",
    "normalize_adjacency",
    "normalize_features",
    "read_edges",
    "read_features",
    "read_labels",
    "write_dynamic_graph",
]
