"""Dynamic stochastic block model with drifting community features."""

from __future__ import annotations

import numpy as np

from . import rng as rngmod
from .graph import DynamicGraph, build_adjacency, make_snapshot, snapshot_edge_sets


def dynamic_sbm(
    num_nodes=200,
    num_steps=5,
    num_classes=2,
    feature_dim=16,
    p_in=0.05,
    p_out=0.005,
    drift=0.15,
    noise=2.5,
    seed=0,
    mode="cumulative",
    return_edges=False,
):
    """Sample a labeled dynamic SBM.

    At every step new edges appear with probability ``p_in`` inside and
    ``p_out`` across communities and are stamped with that step.  Each
    community's feature mean moves from one random prototype toward another
    by ``drift`` per step; node features are the mean plus Gaussian noise of
    scale ``noise``.
    """
    rng = rngmod.stream(seed, "synthetic")
    labels = np.sort(np.arange(num_nodes) % num_classes)
    labels = labels[rng.permutation(num_nodes)]
    start = rng.normal(size=(num_classes, feature_dim))
    end = rng.normal(size=(num_classes, feature_dim))

    iu, ju = np.triu_indices(num_nodes, k=1)
    same = labels[iu] == labels[ju]
    prob = np.where(same, p_in, p_out)
    src, dst, ts = [], [], []
    for t in range(num_steps):
        hit = rng.random(iu.size) < prob
        src.append(iu[hit])
        dst.append(ju[hit])
        ts.append(np.full(hit.sum(), t))
    src, dst, ts = (np.concatenate(a) for a in (src, dst, ts))

    snapshots = []
    for t, (s, d) in enumerate(snapshot_edge_sets(src, dst, ts, num_steps, mode)):
        mix = min(1.0, drift * t)
        means = (1 - mix) * start + mix * end
        X = means[labels] + noise * rng.normal(size=(num_nodes, feature_dim))
        snapshots.append(make_snapshot(build_adjacency(s, d, num_nodes), X))
    graph = DynamicGraph(tuple(snapshots), labels, num_classes)
    return (graph, (src, dst, ts)) if return_edges else graph
