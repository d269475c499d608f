"""Dense layers with explicit backward passes, Adam, and a finite-difference checker.

Arrays are row-major with one sample per row: a layer maps ``(n, in)`` to
``(n, out)``. Everything runs in float64.
"""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np


def glorot_uniform(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


class Affine:
    """Fully connected layer ``y = x W^T + b`` with ``W`` of shape (out, in)."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.W = glorot_uniform(n_in, n_out, rng)
        self.b = np.zeros(n_out)
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)
        self._x = None

    @property
    def n_in(self) -> int:
        return self.W.shape[1]

    @property
    def n_out(self) -> int:
        return self.W.shape[0]

    def parameters(self) -> dict[str, np.ndarray]:
        return {"W": self.W, "b": self.b}

    def gradients(self) -> dict[str, np.ndarray]:
        return {"W": self.dW, "b": self.db}

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ValueError(f"expected input of width {self.n_in}, got shape {x.shape}")
        self._x = x
        return x @ self.W.T + self.b

    def backward(self, grad: np.ndarray) -> np.ndarray:
        if grad.shape != (self._x.shape[0], self.n_out):
            raise ValueError(f"upstream gradient shape {grad.shape} does not match output")
        self.dW[...] = grad.T @ self._x
        self.db[...] = grad.sum(axis=0)
        return grad @ self.W


def affine_forward(layer: Affine, x: np.ndarray) -> np.ndarray:
    return layer.forward(x)


def affine_backward(layer: Affine, grad: np.ndarray):
    gx = layer.backward(grad)
    return gx, layer.gradients()


def activation(kind: str, x: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "tanh":
        return np.tanh(x)
    raise ValueError(f"unknown activation {kind!r}")


def activation_backward(kind: str, x: np.ndarray, y: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Gradient through the activation given its input ``x`` and output ``y``."""
    if kind == "relu":
        # subgradient at exactly 0 is 0
        return grad * (x > 0)
    if kind == "tanh":
        return grad * (1.0 - y * y)
    raise ValueError(f"unknown activation {kind!r}")


def softmax_rows(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_backward(p: np.ndarray, grad: np.ndarray) -> np.ndarray:
    return p * (grad - np.sum(grad * p, axis=1, keepdims=True))


def cross_entropy(p: np.ndarray, target: np.ndarray, rows: np.ndarray | None = None):
    """Mean negative log-likelihood of ``target`` classes over ``rows``.

    Returns the loss and its gradient with respect to ``p``.
    """
    rows = np.arange(len(p)) if rows is None else np.asarray(rows)
    picked = p[rows, target]
    loss = -np.mean(np.log(np.maximum(picked, 1e-300)))
    g = np.zeros_like(p)
    g[rows, target] = -1.0 / (len(rows) * np.maximum(picked, 1e-300))
    return loss, g


def dropout(x: np.ndarray, rate: float, train: bool, rng: np.random.Generator | None):
    """Inverted dropout. Returns ``(output, mask)``; the mask is None when inactive."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return x, None
    keep = rng.random(x.shape) >= rate
    mask = keep / (1.0 - rate)
    return x * mask, mask


def dropout_backward(grad: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    return grad if mask is None else grad * mask


class Adam:
    """Bias-corrected adaptive-moment optimizer over a named parameter dict."""

    def __init__(self, lr: float = 0.01, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> None:
        """Update ``params`` in place."""
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, p in params.items():
            g = grads[k]
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {k}")
            if k not in self.m:
                self.m[k] = np.zeros_like(p)
                self.v[k] = np.zeros_like(p)
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def adam_step(params, grads, state: Adam):
    state.step(params, grads)
    return params


def grad_check(loss_fn: Callable[[], float], params: Mapping[str, np.ndarray],
               grads: Mapping[str, np.ndarray], eps: float = 1e-5, floor: float = 1e-6,
               max_entries: int | None = None, rng: np.random.Generator | None = None) -> float:
    """Maximum relative error between analytic ``grads`` and central differences.

    ``loss_fn`` re-evaluates the loss reading ``params`` (which are perturbed in
    place and restored). Relative error is ``|a - n| / max(|a|, |n|, floor)``.
    With ``max_entries`` only a random subset of entries per parameter is probed.
    """
    worst = 0.0
    for k, p in params.items():
        flat = p.reshape(-1)
        g = np.asarray(grads[k]).reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = (rng or np.random.default_rng(0)).choice(flat.size, max_entries, replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            up = loss_fn()
            flat[i] = orig - eps
            down = loss_fn()
            flat[i] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise FloatingPointError(f"non-finite loss while probing {k}[{i}]")
            num = (up - down) / (2.0 * eps)
            err = abs(g[i] - num) / max(abs(g[i]), abs(num), floor)
            worst = max(worst, err)
    return worst
