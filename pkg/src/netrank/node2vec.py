"""Biased second-order random walks and skip-gram with negative sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import EmbeddingMatrix, Graph
from .sgns import draw_negatives, noise_cdf, sgns_pass


@dataclass
class Node2VecConfig:
    dim: int = 80
    walk_length: int = 40
    walks_per_node: int = 10
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    lr: float = 0.025
    p: float = 1.0
    q: float = 1.0
    undirected: bool = True


class _Adjacency:
    """Sorted neighbor arrays for walking, with lazily cached transition tables."""

    def __init__(self, g: Graph, undirected: bool = True):
        if undirected:
            a = g.undirected()
            ptr, idx = a.indptr, a.indices
        else:
            ptr, idx = g.out_ptr, g.out_idx
        self.nbrs = [np.asarray(idx[ptr[v]:ptr[v + 1]], dtype=np.int64) for v in range(g.n_nodes)]
        self._cache: dict[tuple[int, int], np.ndarray] = {}

    def weights(self, prev: int, cur: int, p: float, q: float) -> np.ndarray:
        nb = self.nbrs[cur]
        w = np.full(len(nb), 1.0 / q)
        w[np.isin(nb, self.nbrs[prev], assume_unique=True)] = 1.0
        w[nb == prev] = 1.0 / p
        return w

    def cdf(self, prev: int, cur: int, p: float, q: float) -> np.ndarray:
        key = (prev, cur)
        c = self._cache.get(key)
        if c is None:
            c = np.cumsum(self.weights(prev, cur, p, q))
            c /= c[-1]
            self._cache[key] = c
        return c


def transition_distribution(g: Graph, prev: int, cur: int, p: float, q: float,
                            undirected: bool = True) -> dict[int, float]:
    """Probability of stepping from ``cur`` to each neighbor, having arrived from ``prev``."""
    if p <= 0 or q <= 0:
        raise ValueError("p and q must be positive")
    adj = _Adjacency(g, undirected)
    nb = adj.nbrs[cur]
    if len(nb) == 0:
        raise ValueError(f"node {cur} has no neighbors")
    if prev not in set(adj.nbrs[cur].tolist()) and cur not in set(adj.nbrs[prev].tolist()):
        raise ValueError(f"({prev}, {cur}) is not an edge")
    w = adj.weights(prev, cur, p, q)
    return dict(zip(nb.tolist(), (w / w.sum()).tolist()))


@dataclass
class WalkSet:
    walks: list[list[int]]
    walk_length: int
    walks_per_node: int
    p: float
    q: float


def generate_walks(g: Graph, p: float = 1.0, q: float = 1.0, walks_per_node: int = 10,
                   walk_length: int = 40, seed: int = 0, undirected: bool = True) -> WalkSet:
    if p <= 0 or q <= 0 or walks_per_node < 1 or walk_length < 1:
        raise ValueError("walk parameters must be positive")
    adj = _Adjacency(g, undirected)
    uniform = p == 1.0 and q == 1.0
    walks = []
    for start in range(g.n_nodes):
        rng = np.random.default_rng([seed, start])
        for _ in range(walks_per_node):
            walk = [start]
            while len(walk) < walk_length:
                cur = walk[-1]
                nb = adj.nbrs[cur]
                if len(nb) == 0:
                    break
                if len(walk) == 1 or uniform:
                    nxt = nb[rng.integers(len(nb))]
                else:
                    cdf = adj.cdf(walk[-2], cur, p, q)
                    nxt = nb[min(np.searchsorted(cdf, rng.random(), side="right"), len(nb) - 1)]
                walk.append(int(nxt))
            walks.append(walk)
    return WalkSet(walks, walk_length, walks_per_node, p, q)


def _skipgram_pairs(walks: list[list[int]], window: int, rng: np.random.Generator):
    centers, contexts = [], []
    for walk in walks:
        w = np.asarray(walk, dtype=np.int64)
        n = len(w)
        if n < 2:
            continue
        # per-position reduced window, as in word2vec
        spans = rng.integers(1, window + 1, size=n)
        for off in range(1, window + 1):
            if off >= n:
                break
            ok = spans[:n - off] >= off
            centers.append(w[:n - off][ok])
            contexts.append(w[off:][ok])
            ok = spans[off:] >= off
            centers.append(w[off:][ok])
            contexts.append(w[:n - off][ok])
    if not centers:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    return np.concatenate(centers), np.concatenate(contexts)


def train_skipgram(walks: WalkSet | list[list[int]], node_ids, dim: int = 80, window: int = 5,
                   negatives_per_positive: int = 5, epochs: int = 5, lr: float = 0.025,
                   seed: int = 0, history: list | None = None,
                   method: str = "node2vec") -> EmbeddingMatrix:
    """Skip-gram with negative sampling over walk co-occurrences.

    Negatives come from the walk unigram distribution raised to 0.75; the
    learning rate decays linearly to ``1e-4 * lr`` over all updates.

    Per-epoch mean losses are appended to ``history`` when given.
    """
    if dim < 1 or window < 1:
        raise ValueError("dim and window must be >= 1")
    walk_list = walks.walks if isinstance(walks, WalkSet) else walks
    if not walk_list:
        raise ValueError("empty walk set")
    n = len(node_ids)
    rng = np.random.default_rng(seed)
    counts = np.bincount(np.concatenate([np.asarray(w) for w in walk_list]), minlength=n)
    cdf = noise_cdf(counts)
    emb = (rng.random((n, dim)) - 0.5) / dim
    ctx = np.zeros((n, dim))
    centers, contexts = _skipgram_pairs(walk_list, window, rng)
    n_pairs = len(centers)
    if n_pairs == 0:
        raise ValueError("walks contain no skip-gram pairs")
    decay = 1.0 - np.arange(epochs * n_pairs) / (epochs * n_pairs)
    lrs = lr * np.maximum(decay, 1e-4)
    for epoch in range(epochs):
        order = rng.permutation(n_pairs)
        neg = draw_negatives(cdf, (n_pairs, negatives_per_positive), rng)
        loss = sgns_pass(emb, ctx, centers[order], contexts[order], neg,
                         lrs[epoch * n_pairs:(epoch + 1) * n_pairs])
        if history is not None:
            history.append(loss / n_pairs)
    return EmbeddingMatrix(node_ids, emb, method, seed)


def node2vec_embed(g: Graph, cfg: Node2VecConfig | None = None, seed: int = 0,
                   history: list | None = None) -> EmbeddingMatrix:
    cfg = cfg or Node2VecConfig()
    ws = generate_walks(g, cfg.p, cfg.q, cfg.walks_per_node, cfg.walk_length, seed, cfg.undirected)
    return train_skipgram(ws, g.node_ids, cfg.dim, cfg.window, cfg.negatives, cfg.epochs,
                          cfg.lr, seed, history)
