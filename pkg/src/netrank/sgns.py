"""Sequential negative-sampling SGD kernel shared by the skip-gram and LINE embedders."""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _log1pexp(x):
    if x > 0:
        return x + np.log1p(np.exp(-x))
    return np.log1p(np.exp(x))


@njit(cache=True)
def _sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


@njit(cache=True)
def sgns_pass(emb, ctx, src, dst, neg, lrs):
    """One pass of per-pair updates; returns the summed loss before each update.

    For pair k the loss is ``-log s(e[src].c[dst]) - sum_j log s(-e[src].c[neg[k, j]])``.
    ``ctx`` may alias ``emb`` (first-order proximity).
    """
    dim = emb.shape[1]
    grad_u = np.empty(dim)
    total = 0.0
    for k in range(src.shape[0]):
        u = src[k]
        lr = lrs[k]
        grad_u[:] = 0.0
        for j in range(neg.shape[1] + 1):
            if j == 0:
                c = dst[k]
                label = 1.0
            else:
                c = neg[k, j - 1]
                label = 0.0
            s = 0.0
            for t in range(dim):
                s += emb[u, t] * ctx[c, t]
            if label == 1.0:
                total += _log1pexp(-s)
            else:
                total += _log1pexp(s)
            g = _sigmoid(s) - label
            for t in range(dim):
                grad_u[t] += g * ctx[c, t]
                ctx[c, t] -= lr * g * emb[u, t]
        for t in range(dim):
            emb[u, t] -= lr * grad_u[t]
    return total


def draw_negatives(cdf: np.ndarray, shape, rng: np.random.Generator) -> np.ndarray:
    """Sample node indices from a cumulative distribution."""
    idx = np.searchsorted(cdf, rng.random(shape), side="right")
    return np.minimum(idx, len(cdf) - 1).astype(np.int64)


def noise_cdf(counts: np.ndarray, power: float = 0.75) -> np.ndarray:
    w = np.asarray(counts, dtype=np.float64) ** power
    if w.sum() <= 0:
        raise ValueError("noise distribution has no mass")
    c = np.cumsum(w / w.sum())
    c[-1] = 1.0
    return c
