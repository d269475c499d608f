"""CART decision tree, random forest and second-order gradient-boosted trees.

All three use exact greedy split enumeration over sorted feature values.
Thresholds are midpoints between adjacent distinct values and rows with
``x <= threshold`` go left. Equal-scoring candidates resolve to the lowest
feature index, then the smallest threshold.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class Tree:
    """Binary tree in flat arrays; node 0 is the root, ``feature == -1`` marks a leaf."""

    feature: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    value: list[float] = field(default_factory=list)
    depth: list[int] = field(default_factory=list)

    def _add(self, value: float, depth: int) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(float(value))
        self.depth.append(depth)
        return len(self.value) - 1

    @property
    def n_nodes(self) -> int:
        return len(self.value)

    @property
    def max_depth(self) -> int:
        return max(self.depth)

    def is_leaf(self, i: int) -> bool:
        return self.feature[i] < 0

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row."""
        feat = np.asarray(self.feature)
        thr = np.asarray(self.threshold)
        left = np.asarray(self.left)
        right = np.asarray(self.right)
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while True:
            f = feat[node]
            active = f >= 0
            if not active.any():
                return node
            r, n = rows[active], node[active]
            go_left = X[r, f[active]] <= thr[n]
            node[active] = np.where(go_left, left[n], right[n])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(self.value)[self.apply(np.asarray(X, dtype=np.float64))]

    def to_dict(self) -> dict:
        return {k: list(getattr(self, k)) for k in
                ("feature", "threshold", "left", "right", "value", "depth")}

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(**{k: list(v) for k, v in d.items()})


def _sorted_candidates(X: np.ndarray, rows: np.ndarray, features: np.ndarray):
    """Per-feature sort of the node's rows; returns (order, sorted values, valid-gap mask)."""
    Xn = X[np.ix_(rows, features)]
    order = np.argsort(Xn, axis=0, kind="stable")
    V = np.take_along_axis(Xn, order, axis=0)
    distinct = V[:-1] < V[1:]
    return order, V, distinct


def _pick(score: np.ndarray, V: np.ndarray, features: np.ndarray, higher_better: bool):
    """Best (feature, threshold, score) over a (m-1, F) score grid; NaN marks invalid."""
    s = score.T  # feature-major so argmax/argmin favours lower feature index, then threshold
    if np.all(np.isnan(s)):
        return None
    flat = np.nanargmax(s) if higher_better else np.nanargmin(s)
    j, i = np.unravel_index(flat, s.shape)
    lo, hi = V[i, j], V[i + 1, j]
    thr = 0.5 * (lo + hi)
    if not lo <= thr < hi:
        thr = lo
    return int(features[j]), float(thr), float(s[j, i])


def _gini_split(X, y, rows, features, min_samples_leaf):
    m = len(rows)
    if m < 2:
        return None
    order, V, distinct = _sorted_candidates(X, rows, features)
    ys = y[rows][order].astype(np.float64)
    pos_l = np.cumsum(ys, axis=0)[:-1]
    total = ys.sum(axis=0)
    n_l = np.arange(1, m, dtype=np.float64)[:, None]
    n_r = m - n_l
    pos_r = total - pos_l
    # n * gini = 2 * (pos - pos^2 / n)
    imp = 2.0 * (pos_l - pos_l ** 2 / n_l) + 2.0 * (pos_r - pos_r ** 2 / n_r)
    ok = distinct & (n_l >= min_samples_leaf) & (n_r >= min_samples_leaf)
    return _pick(np.where(ok, imp, np.nan), V, features, higher_better=False)


def gbt_leaf_weight(G: float, H: float, lam: float) -> float:
    return -G / (H + lam)


def gbt_split_gain(G_L, H_L, G_R, H_R, lam, gamma):
    return 0.5 * (G_L ** 2 / (H_L + lam) + G_R ** 2 / (H_R + lam)
                  - (G_L + G_R) ** 2 / (H_L + H_R + lam)) - gamma


def _gbt_split(X, g, h, rows, features, lam, gamma, min_child_hessian):
    m = len(rows)
    if m < 2:
        return None
    order, V, distinct = _sorted_candidates(X, rows, features)
    gs, hs = g[rows][order], h[rows][order]
    GL = np.cumsum(gs, axis=0)[:-1]
    HL = np.cumsum(hs, axis=0)[:-1]
    G, H = g[rows].sum(), h[rows].sum()
    GR, HR = G - GL, H - HL
    gain = gbt_split_gain(GL, HL, GR, HR, lam, gamma)
    ok = distinct & (HL >= min_child_hessian) & (HR >= min_child_hessian)
    best = _pick(np.where(ok, gain, np.nan), V, features, higher_better=True)
    if best is None or not best[2] > 0:
        return None
    return best


def _grow(X, rows, leaf_value, find_split, can_split, max_depth, feature_sampler=None) -> Tree:
    n_features = X.shape[1]
    all_features = np.arange(n_features)
    tree = Tree()
    root = tree._add(leaf_value(rows), 0)
    stack = [(root, rows)]
    while stack:
        node, r = stack.pop()
        d = tree.depth[node]
        if (max_depth is not None and d >= max_depth) or not can_split(r):
            continue
        feats = all_features if feature_sampler is None else feature_sampler()
        split = find_split(r, feats)
        if split is None:
            continue
        f, thr, _ = split
        go_left = X[r, f] <= thr
        lr, rr = r[go_left], r[~go_left]
        tree.feature[node] = f
        tree.threshold[node] = thr
        tree.left[node] = tree._add(leaf_value(lr), d + 1)
        tree.right[node] = tree._add(leaf_value(rr), d + 1)
        # right pushed first so the left subtree is expanded first
        stack.append((tree.right[node], rr))
        stack.append((tree.left[node], lr))
    return tree


def _check_xy(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("X must be a non-empty 2-D array")
    if len(y) != len(X):
        raise ValueError(f"X has {len(X)} rows but y has {len(y)}")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("y must be binary 0/1")
    return X, y.astype(np.int64)


def _cart(X, y, rows, max_depth, min_samples_leaf, feature_sampler=None) -> Tree:
    def leaf_value(r):
        return y[r].mean()

    def can_split(r):
        p = y[r].sum()
        return len(r) >= 2 * min_samples_leaf and 0 < p < len(r)

    def find_split(r, feats):
        return _gini_split(X, y, r, feats, min_samples_leaf)

    return _grow(X, rows, leaf_value, find_split, can_split, max_depth, feature_sampler)


class DecisionTree:
    """Gini CART. Leaves hold the positive fraction of their training rows.

    Any impure node with a legal split is split, including zero-gain splits
    (so XOR-like interactions are reachable at depth 2).
    """

    kind = "dt"

    def __init__(self, max_depth: int | None = None, min_samples_leaf: int = 1):
        if max_depth is not None and max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.tree_: Tree | None = None

    def params(self) -> dict:
        return {"max_depth": self.max_depth, "min_samples_leaf": self.min_samples_leaf}

    def fit(self, X, y) -> "DecisionTree":
        X, y = _check_xy(X, y)
        self.tree_ = _cart(X, y, np.arange(len(X)), self.max_depth, self.min_samples_leaf)
        return self

    def predict_proba(self, X) -> np.ndarray:
        return self.tree_.predict(X)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": self.params(), "tree": self.tree_.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTree":
        m = cls(**d["params"])
        m.tree_ = Tree.from_dict(d["tree"])
        return m


class RandomForest:
    """Bagged Gini trees with a random feature subset drawn at every split."""

    kind = "rf"

    def __init__(self, n_trees: int = 100, max_depth: int | None = None, feature_frac: float = 0.3,
                 min_samples_leaf: int = 1, bootstrap: bool = True, seed: int = 0):
        if n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if not 0 < feature_frac <= 1:
            raise ValueError("feature_frac must be in (0, 1]")
        if max_depth is not None and max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.feature_frac = feature_frac
        self.min_samples_leaf = min_samples_leaf
        self.bootstrap = bootstrap
        self.seed = seed
        self.trees_: list[Tree] = []

    def params(self) -> dict:
        return {"n_trees": self.n_trees, "max_depth": self.max_depth,
                "feature_frac": self.feature_frac, "min_samples_leaf": self.min_samples_leaf,
                "bootstrap": self.bootstrap, "seed": self.seed}

    def fit(self, X, y) -> "RandomForest":
        X, y = _check_xy(X, y)
        m, f = X.shape
        k = max(1, math.floor(self.feature_frac * f))
        self.trees_ = []
        for t in range(self.n_trees):
            rng = np.random.default_rng([self.seed, t])
            rows = rng.integers(m, size=m) if self.bootstrap else np.arange(m)
            sampler = (lambda rng=rng: np.sort(rng.choice(f, k, replace=False))) if k < f else None
            self.trees_.append(_cart(X, y, rows, self.max_depth, self.min_samples_leaf, sampler))
        return self

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        total = np.zeros(len(X))
        for t in self.trees_:
            total += t.predict(X)
        return total / len(self.trees_)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": self.params(),
                "trees": [t.to_dict() for t in self.trees_]}

    @classmethod
    def from_dict(cls, d: dict) -> "RandomForest":
        m = cls(**d["params"])
        m.trees_ = [Tree.from_dict(t) for t in d["trees"]]
        return m


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def log_loss(y, p) -> float:
    p = np.clip(p, 1e-15, 1 - 1e-15)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log1p(-p)))


class GradientBoostedTrees:
    """Logistic-loss boosting with Newton leaf weights ``-G / (H + lam)``.

    ``train_loss_`` holds the training log-loss after each round (index 0 is
    the base score alone).
    """

    kind = "gbt"

    def __init__(self, rounds: int = 200, lr: float = 0.1, max_depth: int = 4, lam: float = 1.0,
                 gamma: float = 0.0, min_child_hessian: float = 1.0):
        if rounds < 0 or lr <= 0 or max_depth < 0 or lam < 0 or gamma < 0 or min_child_hessian < 0:
            raise ValueError("invalid boosting parameters")
        self.rounds = rounds
        self.lr = lr
        self.max_depth = max_depth
        self.lam = lam
        self.gamma = gamma
        self.min_child_hessian = min_child_hessian
        self.base_score = 0.0
        self.trees_: list[Tree] = []
        self.train_loss_: list[float] = []

    def params(self) -> dict:
        return {"rounds": self.rounds, "lr": self.lr, "max_depth": self.max_depth,
                "lam": self.lam, "gamma": self.gamma, "min_child_hessian": self.min_child_hessian}

    def fit(self, X, y) -> "GradientBoostedTrees":
        X, y = _check_xy(X, y)
        if len(X) < 2:
            raise ValueError("need at least 2 rows")
        prior = min(max(y.mean(), 1e-6), 1 - 1e-6)
        self.base_score = math.log(prior / (1 - prior))
        margin = np.full(len(X), self.base_score)
        self.trees_ = []
        self.train_loss_ = [log_loss(y, _sigmoid(margin))]
        rows = np.arange(len(X))
        for _ in range(self.rounds):
            p = _sigmoid(margin)
            g, h = p - y, p * (1 - p)

            def leaf_value(r):
                return gbt_leaf_weight(g[r].sum(), h[r].sum(), self.lam)

            def find_split(r, feats):
                return _gbt_split(X, g, h, r, feats, self.lam, self.gamma, self.min_child_hessian)

            tree = _grow(X, rows, leaf_value, find_split, lambda r: len(r) >= 2, self.max_depth)
            self.trees_.append(tree)
            margin += self.lr * tree.predict(X)
            self.train_loss_.append(log_loss(y, _sigmoid(margin)))
        return self

    def decision_function(self, X, rounds: int | None = None) -> np.ndarray:
        """Log-odds margin; ``rounds`` limits it to the first trees (staged prediction)."""
        X = np.asarray(X, dtype=np.float64)
        margin = np.full(len(X), self.base_score)
        for t in self.trees_[:rounds]:
            margin += self.lr * t.predict(X)
        return margin

    def predict_proba(self, X) -> np.ndarray:
        return _sigmoid(self.decision_function(X))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": self.params(), "base_score": self.base_score,
                "trees": [t.to_dict() for t in self.trees_]}

    @classmethod
    def from_dict(cls, d: dict) -> "GradientBoostedTrees":
        m = cls(**d["params"])
        m.base_score = d["base_score"]
        m.trees_ = [Tree.from_dict(t) for t in d["trees"]]
        return m


CLASSIFIERS = {"dt": DecisionTree, "rf": RandomForest, "gbt": GradientBoostedTrees}


def make_classifier(kind: str, **params):
    try:
        cls = CLASSIFIERS[kind]
    except KeyError:
        raise ValueError(f"unknown classifier {kind!r}; expected one of {sorted(CLASSIFIERS)}") from None
    return cls(**params)


def fit_decision_tree(X, y, max_depth=None, min_samples_leaf=1) -> DecisionTree:
    return DecisionTree(max_depth, min_samples_leaf).fit(X, y)


def fit_random_forest(X, y, n_trees=100, max_depth=None, feature_frac=0.3, seed=0,
                      bootstrap=True, min_samples_leaf=1) -> RandomForest:
    return RandomForest(n_trees, max_depth, feature_frac, min_samples_leaf, bootstrap, seed).fit(X, y)


def fit_gbt(X, y, rounds=200, lr=0.1, max_depth=4, lam=1.0, gamma=0.0,
            min_child_hessian=1.0) -> GradientBoostedTrees:
    return GradientBoostedTrees(rounds, lr, max_depth, lam, gamma, min_child_hessian).fit(X, y)


def save_model(model, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model.to_dict()), encoding="utf-8")


def load_model(path: str | Path):
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    return CLASSIFIERS[d["kind"]].from_dict(d)
