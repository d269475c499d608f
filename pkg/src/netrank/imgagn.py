"""Adversarial embedding for imbalanced node labels with a GraphSAGE encoder.

A generator turns noise into mixing weights over the real minority nodes;
each synthetic node gets the weighted average of minority features and edges
to the minority nodes it weights at least uniformly. The real graph plus
synthetic nodes goes through a two-layer GraphSAGE encoder, and a one-layer
GraphSAGE discriminator with softmax assigns every node to one of three
classes: real positive, real negative, synthetic.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .graph import EmbeddingMatrix, FeatureMatrix, Graph, LabelSet
from .ndmath import (Adam, Affine, activation, activation_backward, cross_entropy,
                     dropout, dropout_backward, glorot_uniform, softmax_backward, softmax_rows)

logger = logging.getLogger(__name__)

REAL_POS, REAL_NEG, SYNTHETIC = 0, 1, 2


@dataclass
class ImgagnConfig:
    dim: int = 80
    encoder_hidden: int = 128
    gen_hidden: tuple[int, int] = (256, 128)
    noise_dim: int = 100
    dropout: float = 0.5
    epochs: int = 20  # generator epochs
    disc_epochs: int = 20  # discriminator epochs per generator epoch
    lr: float = 0.01
    gen_lr: float = 0.01
    weight_decay: float = 0.05  # L2 on encoder and discriminator weights
    standardize: bool = True


def mean_adjacency(adj: sp.spmatrix) -> sp.csr_matrix:
    """Row-normalised adjacency; rows of isolated nodes are zero."""
    adj = sp.csr_matrix(adj, dtype=np.float64)
    deg = np.asarray(adj.sum(axis=1)).ravel()
    inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
    return sp.diags(inv) @ adj


class MeanAggregator:
    """Row-normalised adjacency with its transpose cached for the backward pass."""

    def __init__(self, adj: sp.spmatrix):
        self.A = mean_adjacency(adj)
        self.AT = self.A.T.tocsr()

    @property
    def n(self) -> int:
        return self.A.shape[0]


def _aggregator(A) -> MeanAggregator:
    if isinstance(A, MeanAggregator):
        return A
    agg = MeanAggregator.__new__(MeanAggregator)
    agg.A = sp.csr_matrix(A)
    agg.AT = agg.A.T.tocsr()
    return agg


class SageConv:
    """``h' = h W_self^T + mean_{u in N(v)} h_u W_neigh^T + b``.

    The neighbour mean is taken on whichever side of ``W_neigh`` is narrower.
    """

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        self.W_self = glorot_uniform(n_in, n_out, rng)
        self.W_neigh = glorot_uniform(n_in, n_out, rng)
        self.b = np.zeros(n_out)
        self._grads = {k: np.zeros_like(v) for k, v in self.parameters().items()}
        self._x = self._agg = None

    @property
    def n_in(self) -> int:
        return self.W_self.shape[1]

    @property
    def n_out(self) -> int:
        return self.W_self.shape[0]

    def parameters(self) -> dict[str, np.ndarray]:
        return {"W_self": self.W_self, "W_neigh": self.W_neigh, "b": self.b}

    def gradients(self) -> dict[str, np.ndarray]:
        return self._grads

    def forward(self, x: np.ndarray, A) -> np.ndarray:
        """``A`` is a row-normalised adjacency (sparse matrix or MeanAggregator)."""
        agg = _aggregator(A)
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ValueError(f"expected input width {self.n_in}, got shape {x.shape}")
        if agg.n != len(x):
            raise ValueError(f"adjacency of {agg.n} nodes does not match {len(x)} rows")
        self._x, self._agg = x, agg
        if self.n_in <= self.n_out:
            neigh = (agg.A @ x) @ self.W_neigh.T
        else:
            neigh = agg.A @ (x @ self.W_neigh.T)
        return x @ self.W_self.T + neigh + self.b

    def backward(self, grad: np.ndarray) -> np.ndarray:
        g, x, agg = self._grads, self._x, self._agg
        g["W_self"][...] = grad.T @ x
        g["b"][...] = grad.sum(axis=0)
        if self.n_in <= self.n_out:
            g["W_neigh"][...] = grad.T @ (agg.A @ x)
            gx_neigh = agg.AT @ (grad @ self.W_neigh)
        else:
            back = agg.AT @ grad
            g["W_neigh"][...] = back.T @ x
            gx_neigh = back @ self.W_neigh
        return grad @ self.W_self + gx_neigh


def _prefixed(prefix: str, d: dict) -> dict:
    return {f"{prefix}.{k}": v for k, v in d.items()}


class SageEncoder:
    """Two SAGE convolutions with ReLU and dropout in between."""

    def __init__(self, n_in: int, hidden: int = 128, dim: int = 80, dropout: float = 0.5,
                 rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.conv1 = SageConv(n_in, hidden, rng)
        self.conv2 = SageConv(hidden, dim, rng)
        self.dropout = dropout
        self._cache = None

    @property
    def dim(self) -> int:
        return self.conv2.b.shape[0]

    def parameters(self):
        return {**_prefixed("conv1", self.conv1.parameters()),
                **_prefixed("conv2", self.conv2.parameters())}

    def gradients(self):
        return {**_prefixed("conv1", self.conv1.gradients()),
                **_prefixed("conv2", self.conv2.gradients())}

    def forward(self, x, A, train: bool = False, rng: np.random.Generator | None = None):
        pre = self.conv1.forward(x, A)
        h = activation("relu", pre)
        h_drop, mask = dropout(h, self.dropout, train, rng)
        self._cache = (pre, h, mask)
        return self.conv2.forward(h_drop, A)

    def backward(self, grad):
        pre, h, mask = self._cache
        g = dropout_backward(self.conv2.backward(grad), mask)
        return self.conv1.backward(activation_backward("relu", pre, h, g))


class Discriminator:
    """One SAGE convolution to three classes followed by a row softmax."""

    def __init__(self, dim: int = 80, rng: np.random.Generator | None = None):
        self.conv = SageConv(dim, 3, rng if rng is not None else np.random.default_rng(0))
        self._p = None

    def parameters(self):
        return _prefixed("conv", self.conv.parameters())

    def gradients(self):
        return _prefixed("conv", self.conv.gradients())

    def forward(self, emb, A):
        self._p = softmax_rows(self.conv.forward(emb, A))
        return self._p

    def backward(self, grad_p):
        return self.conv.backward(softmax_backward(self._p, grad_p))


class Generator:
    """noise -> h1 -> h2 -> n_minority through ReLU, ReLU, Tanh."""

    def __init__(self, noise_dim: int, hidden: tuple[int, int], n_minority: int,
                 rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        sizes = [noise_dim, *hidden, n_minority]
        self.layers = [Affine(a, b, rng) for a, b in zip(sizes[:-1], sizes[1:])]
        self.acts = ["relu"] * (len(self.layers) - 1) + ["tanh"]
        self._cache = []

    @property
    def n_minority(self) -> int:
        return self.layers[-1].n_out

    def parameters(self):
        out = {}
        for i, layer in enumerate(self.layers):
            out.update(_prefixed(f"fc{i}", layer.parameters()))
        return out

    def gradients(self):
        out = {}
        for i, layer in enumerate(self.layers):
            out.update(_prefixed(f"fc{i}", layer.gradients()))
        return out

    def forward(self, z):
        self._cache = []
        h = z
        for layer, act in zip(self.layers, self.acts):
            pre = layer.forward(h)
            h = activation(act, pre)
            self._cache.append((pre, h))
        return h

    def backward(self, grad):
        for layer, act, (pre, out) in reversed(list(zip(self.layers, self.acts, self._cache))):
            grad = layer.backward(activation_backward(act, pre, out, grad))
        return grad


@dataclass
class SyntheticBatch:
    weights: np.ndarray  # (n_synthetic, n_minority), rows sum to 1
    features: np.ndarray  # weights @ minority features
    edges: np.ndarray  # (k, 2): synthetic index -> minority position
    logits: np.ndarray  # tanh output the weights were built from

    @property
    def count(self) -> int:
        return len(self.weights)

    def permuted(self, perm: np.ndarray) -> "SyntheticBatch":
        inv = np.argsort(perm)
        return SyntheticBatch(self.weights[perm], self.features[perm],
                              np.column_stack([inv[self.edges[:, 0]], self.edges[:, 1]]),
                              self.logits[perm])


def synthetic_edges(weights: np.ndarray) -> np.ndarray:
    """Edges ``(i, j)`` wherever ``weights[i, j] >= 1 / n_minority``."""
    thr = 1.0 / weights.shape[1]
    return np.argwhere(weights >= thr)


def batch_from_logits(logits: np.ndarray, minority_features: np.ndarray) -> SyntheticBatch:
    w = softmax_rows(logits)
    return SyntheticBatch(w, w @ minority_features, synthetic_edges(w), logits)


def generate_synthetic(gen: Generator, z: np.ndarray, minority_features: np.ndarray) -> SyntheticBatch:
    if minority_features.shape[0] < 2:
        raise ValueError("need at least 2 minority nodes to synthesise from")
    if len(z) <= 0:
        raise ValueError("synthetic count must be positive")
    if gen.n_minority != len(minority_features):
        raise ValueError("generator output width must equal the number of minority nodes")
    return batch_from_logits(gen.forward(z), minority_features)


def augmented_adjacency(base_adj: sp.csr_matrix, batch: SyntheticBatch | None,
                        minority_idx: np.ndarray) -> sp.csr_matrix:
    """Undirected adjacency of real nodes followed by synthetic nodes."""
    n = base_adj.shape[0]
    if batch is None or batch.count == 0:
        return sp.csr_matrix(base_adj)
    s = batch.count
    rows = n + batch.edges[:, 0]
    cols = minority_idx[batch.edges[:, 1]]
    e = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n + s, n + s))
    big = sp.block_diag([base_adj, sp.csr_matrix((s, s))], format="csr")
    return ((big + e + e.T) > 0).astype(np.float64).tocsr()


def augmented_graph(g: Graph, batch: SyntheticBatch, minority_idx: np.ndarray) -> Graph:
    """The real graph plus synthetic nodes ``__syn{i}`` with edges into the minority."""
    ids = g.node_ids + tuple(f"__syn{i}" for i in range(batch.count))
    syn = [(g.n_nodes + i, int(minority_idx[j])) for i, j in batch.edges]
    return Graph.from_edges(ids, [*map(tuple, g.edges()), *syn])


def encode(A_mean: sp.csr_matrix, x: np.ndarray, enc: SageEncoder, train: bool = False,
           rng: np.random.Generator | None = None) -> np.ndarray:
    return enc.forward(x, A_mean, train, rng)


def discriminate(emb: np.ndarray, disc: Discriminator, A_mean: sp.csr_matrix) -> np.ndarray:
    return disc.forward(emb, A_mean)


@dataclass
class TrainLog:
    gen_loss: list[float] = field(default_factory=list)
    disc_loss: list[float] = field(default_factory=list)
    disc_epochs: list[int] = field(default_factory=list)
    n_synthetic: int = 0
    n_minority: int = 0
    n_majority: int = 0

    def write(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=1) + "\n", encoding="utf-8")


def _standardize(x: np.ndarray) -> np.ndarray:
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    return (x - mu) / np.where(sd > 0, sd, 1.0)


def _check_finite(value: float, what: str, epoch: int) -> float:
    if not np.isfinite(value):
        raise FloatingPointError(f"non-finite {what} at generator epoch {epoch}")
    return value


def train_imgagn(g: Graph, features: FeatureMatrix, labels: LabelSet,
                 cfg: ImgagnConfig | None = None, seed: int = 0) -> tuple[EmbeddingMatrix, TrainLog]:
    """Alternate 20 discriminator epochs (encoder + discriminator) with one generator step.

    Nodes outside ``labels.universe`` take part in message passing but not in
    any loss. Returns embeddings for the real nodes only.
    """
    cfg = cfg or ImgagnConfig()
    x = features.rows(g.node_ids)
    if cfg.standardize:
        x = _standardize(x)
    node_pos = {v: i for i, v in enumerate(g.node_ids)}
    missing = [v for v in labels.universe if v not in node_pos]
    if missing:
        raise ValueError(f"{len(missing)} labelled ids are not graph nodes, e.g. {missing[0]!r}")
    pos_idx = np.array(sorted(node_pos[v] for v in labels.positives), dtype=np.int64)
    neg_idx = np.array(sorted(node_pos[v] for v in labels.negatives), dtype=np.int64)
    if len(pos_idx) == 0:
        raise ValueError("no positive labels")
    n_syn = len(neg_idx) - len(pos_idx)
    adversarial = n_syn > 0 and len(pos_idx) >= 2
    if not adversarial:
        logger.warning("minority is not smaller than majority; training encoder without a generator")
        n_syn = 0

    rng = np.random.default_rng(seed)
    init = np.random.default_rng([seed, 1])
    enc = SageEncoder(x.shape[1], cfg.encoder_hidden, cfg.dim, cfg.dropout, init)
    disc = Discriminator(cfg.dim, init)
    gen = Generator(cfg.noise_dim, cfg.gen_hidden, len(pos_idx), init) if adversarial else None
    d_params = {**_prefixed("enc", enc.parameters()), **_prefixed("disc", disc.parameters())}
    d_opt = Adam(lr=cfg.lr)
    g_opt = Adam(lr=cfg.gen_lr)
    base = g.undirected()
    x_min = x[pos_idx]

    n = g.n_nodes
    loss_rows = np.concatenate([pos_idx, neg_idx, n + np.arange(n_syn)])
    targets = np.concatenate([np.full(len(pos_idx), REAL_POS), np.full(len(neg_idx), REAL_NEG),
                              np.full(n_syn, SYNTHETIC)])
    log = TrainLog(n_synthetic=n_syn, n_minority=len(pos_idx), n_majority=len(neg_idx))

    def d_grads():
        grads = {**_prefixed("enc", enc.gradients()), **_prefixed("disc", disc.gradients())}
        if cfg.weight_decay:
            for k, v in grads.items():
                if not k.endswith(".b"):
                    v += cfg.weight_decay * d_params[k]
        return grads

    batch = z = None
    A = MeanAggregator(base)
    for epoch in range(cfg.epochs):
        if adversarial:
            z = rng.uniform(-1.0, 1.0, size=(n_syn, cfg.noise_dim))
            batch = generate_synthetic(gen, z, x_min)
            A = MeanAggregator(augmented_adjacency(base, batch, pos_idx))
            x_aug = np.vstack([x, batch.features])
        else:
            x_aug = x
        d_losses = []
        for _ in range(cfg.disc_epochs):
            emb = enc.forward(x_aug, A, True, rng)
            p = disc.forward(emb, A)
            loss, gp = cross_entropy(p, targets, loss_rows)
            d_losses.append(_check_finite(loss, "discriminator loss", epoch))
            enc.backward(disc.backward(gp))
            d_opt.step(d_params, d_grads())
        log.disc_loss.append(float(np.mean(d_losses)))
        log.disc_epochs.append(len(d_losses))

        if adversarial:
            logits = gen.forward(z)
            w = softmax_rows(logits)
            x_aug = np.vstack([x, w @ x_min])
            emb = enc.forward(x_aug, A, True, rng)
            p = disc.forward(emb, A)
            syn_rows = n + np.arange(n_syn)
            loss, gp = cross_entropy(p, np.full(n_syn, REAL_POS), syn_rows)
            log.gen_loss.append(_check_finite(float(loss), "generator loss", epoch))
            gx = enc.backward(disc.backward(gp))
            gw = gx[n:] @ x_min.T
            gen.backward(softmax_backward(w, gw))
            g_opt.step(gen.parameters(), gen.gradients())

    if adversarial:
        batch = batch_from_logits(gen.forward(z), x_min)
        A = MeanAggregator(augmented_adjacency(base, batch, pos_idx))
        x_aug = np.vstack([x, batch.features])
    else:
        x_aug = x
    emb = enc.forward(x_aug, A, False)[:n]
    if not np.all(np.isfinite(emb)):
        raise FloatingPointError("non-finite embeddings after training")
    return EmbeddingMatrix(g.node_ids, emb, "imgagn", seed), log
