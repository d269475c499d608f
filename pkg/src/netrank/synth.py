"""Planted-label stochastic block model benchmark."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import (FeatureMatrix, Graph, LabelSet, write_edge_list, write_feature_table,
                    write_labels)


@dataclass
class SbmSpec:
    n: int = 600
    block_sizes: tuple[int, ...] = (120, 480)
    p_in: float = 0.05
    p_out: float = 0.005
    positive_block: int = 0
    positive_frac: float = 0.6
    flip_rate: float = 0.1
    signal_dims: int = 4
    noise_dims: int = 16
    seed: int = 0

    def validate(self) -> None:
        sizes = list(self.block_sizes)
        if not sizes or any(s <= 0 for s in sizes):
            raise ValueError(f"block sizes must be positive, got {sizes}")
        if sum(sizes) != self.n:
            raise ValueError(f"block sizes sum to {sum(sizes)}, expected n={self.n}")
        for name in ("p_in", "p_out", "positive_frac"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not 0.0 <= self.flip_rate < 0.5:
            raise ValueError("flip_rate must lie in [0, 0.5)")
        if not 0 <= self.positive_block < len(sizes):
            raise ValueError("positive_block out of range")
        if self.signal_dims < 0 or self.noise_dims < 0 or self.signal_dims + self.noise_dims < 1:
            raise ValueError("need at least one feature dimension")


def node_name(i: int, n: int) -> str:
    return f"g{i:0{len(str(n - 1))}d}"


def generate(spec: SbmSpec | None = None) -> tuple[Graph, FeatureMatrix, LabelSet]:
    """Directed SBM graph, block-signal + noise features and planted labels.

    Every ordered pair of distinct nodes is an edge independently with
    ``p_in`` inside a block and ``p_out`` across. ``floor(positive_frac *
    size)`` nodes of the positive block are positives; then every node of
    that block has its label flipped with probability ``flip_rate``.
    """
    spec = spec or SbmSpec()
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    block = np.repeat(np.arange(len(spec.block_sizes)), spec.block_sizes)
    prob = np.where(block[:, None] == block[None, :], spec.p_in, spec.p_out)
    adj = rng.random((n, n)) < prob
    np.fill_diagonal(adj, False)
    ids = [node_name(i, n) for i in range(n)]
    g = Graph.from_edges(ids, map(tuple, np.argwhere(adj)))

    members = np.flatnonzero(block == spec.positive_block)
    k = math.floor(spec.positive_frac * len(members))
    y = np.zeros(n, dtype=bool)
    y[rng.choice(members, k, replace=False)] = True
    flip = rng.random(len(members)) < spec.flip_rate
    y[members[flip]] ^= True

    signal = np.zeros((n, spec.signal_dims))
    for j in range(spec.signal_dims):
        signal[:, j] = block == j % len(spec.block_sizes)
    noise = rng.standard_normal((n, spec.noise_dims))
    cols = [f"signal{j}" for j in range(spec.signal_dims)] + [f"noise{j}" for j in range(spec.noise_dims)]
    fm = FeatureMatrix(ids, cols, np.hstack([signal, noise]))
    labels = LabelSet({ids[i] for i in np.flatnonzero(y)}, ids)
    return g, fm, labels


def write_benchmark(spec: SbmSpec, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    g, fm, labels = generate(spec)
    paths = {"edges": out / "edges.tsv", "features": out / "features.csv", "labels": out / "labels.csv"}
    write_edge_list(g, paths["edges"])
    write_feature_table(fm, paths["features"])
    write_labels(labels, paths["labels"])
    return paths
