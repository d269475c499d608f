"""LINE: edge-sampling embedding with first- and second-order proximity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import EmbeddingMatrix, Graph
from .sgns import draw_negatives, noise_cdf, sgns_pass


@dataclass
class LineConfig:
    dim_total: int = 80
    order: str = "both"
    negatives_per_edge: int = 5
    sample_count: int | None = None  # default 100 * n_edges
    lr: float = 0.025
    chunks: int = 10  # loss is reported once per chunk of samples

    def validate(self, n_edges: int) -> int:
        if self.order not in ("first", "second", "both"):
            raise ValueError(f"order must be first, second or both, got {self.order!r}")
        if self.order == "both" and self.dim_total % 2:
            raise ValueError("dim_total must be even when order='both'")
        if self.dim_total < 1:
            raise ValueError("dim_total must be >= 1")
        count = 100 * n_edges if self.sample_count is None else self.sample_count
        if count < n_edges:
            raise ValueError(f"sample_count {count} is below the edge count {n_edges}")
        return count


def sample_edge(g: Graph, rng: np.random.Generator, size: int | None = None):
    """Uniform draw over edges: one ``(source, target)`` or an array of ``size`` of them."""
    if g.n_edges == 0:
        raise ValueError("graph has no edges")
    e = g.edges()
    if size is None:
        s, t = e[rng.integers(g.n_edges)]
        return int(s), int(t)
    return e[rng.integers(g.n_edges, size=size)]


def _train_order(g: Graph, order: str, dim: int, cfg: LineConfig, count: int,
                 rng: np.random.Generator, history: list | None) -> np.ndarray:
    n = g.n_nodes
    emb = (rng.random((n, dim)) - 0.5) / dim
    ctx = emb if order == "first" else np.zeros((n, dim))
    cdf = noise_cdf(g.out_degree() + g.in_degree())
    bounds = np.linspace(0, count, cfg.chunks + 1).astype(np.int64)
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        m = int(hi - lo)
        if m == 0:
            continue
        pairs = sample_edge(g, rng, m)
        if order == "first":
            # proximity is symmetric: orient each sampled edge at random
            flip = rng.random(m) < 0.5
            pairs[flip] = pairs[flip][:, ::-1]
        neg = draw_negatives(cdf, (m, cfg.negatives_per_edge), rng)
        lrs = cfg.lr * np.maximum(1.0 - np.arange(lo, hi) / count, 1e-4)
        loss = sgns_pass(emb, ctx, pairs[:, 0].copy(), pairs[:, 1].copy(), neg, lrs)
        if history is not None:
            history.append(loss / m)
    return emb


def line_train(g: Graph, cfg: LineConfig | None = None, seed: int = 0,
               history: dict | None = None) -> EmbeddingMatrix:
    """Train LINE; with ``order='both'`` two halves are trained independently and concatenated.

    Only node vectors are returned; second-order context vectors are discarded.
    ``history`` (if given) receives per-chunk mean losses keyed by order.
    """
    cfg = cfg or LineConfig()
    count = cfg.validate(g.n_edges)
    if g.n_edges == 0:
        raise ValueError("graph has no edges")
    orders = ["first", "second"] if cfg.order == "both" else [cfg.order]
    dim = cfg.dim_total // len(orders)
    parts = []
    for k, order in enumerate(orders):
        rng = np.random.default_rng([seed, k])
        log = None
        if history is not None:
            log = history.setdefault(order, [])
        parts.append(_train_order(g, order, dim, cfg, count, rng, log))
    return EmbeddingMatrix(g.node_ids, np.hstack(parts), "line", seed)
