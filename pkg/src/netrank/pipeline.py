"""Feature pruning, embedding/feature assembly and the subsampled classifier ensemble."""

from __future__ import annotations

import logging
import math
import zlib
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .evaluation import auc_roc, stratified_folds
from .graph import EmbeddingMatrix, FeatureMatrix, Graph, LabelSet
from .imgagn import ImgagnConfig, train_imgagn
from .line import LineConfig, line_train
from .node2vec import Node2VecConfig, node2vec_embed
from .trees import make_classifier

logger = logging.getLogger(__name__)

METHODS = ("node2vec", "line", "imgagn")


def derive_seed(seed: int, tag: str) -> int:
    """Stable per-module seed from the run seed and a tag."""
    return int(np.random.SeedSequence([seed, zlib.crc32(tag.encode())]).generate_state(1)[0])


def correlation_filter(fm: FeatureMatrix, threshold: float = 0.85) -> tuple[FeatureMatrix, list[str]]:
    """Drop zero-variance columns, then scan left to right dropping any column whose
    |Pearson r| with an already kept column is >= ``threshold``."""
    if not 0 < threshold <= 1:
        raise ValueError("threshold must lie in (0, 1]")
    X = fm.values
    centered = X - X.mean(axis=0)
    norms = np.sqrt((centered ** 2).sum(axis=0))
    kept: list[int] = []
    for j in range(X.shape[1]):
        if norms[j] == 0 or np.ptp(X[:, j]) == 0:
            continue
        if kept:
            r = centered[:, kept].T @ centered[:, j] / (norms[kept] * norms[j])
            if np.any(np.abs(r) >= threshold):
                continue
        kept.append(j)
    if not kept:
        raise ValueError("correlation filter dropped every column")
    names = [fm.col_names[j] for j in kept]
    return FeatureMatrix(fm.row_ids, names, X[:, kept]), names


def assemble_features(emb: EmbeddingMatrix | None, ext: FeatureMatrix | None) -> FeatureMatrix:
    """Inner join on id: embedding columns first, then the extended features."""
    if emb is None and ext is None:
        raise ValueError("nothing to assemble")
    if emb is None:
        return ext
    ef = emb.as_features()
    if ext is None:
        return ef
    ext_pos = {v: i for i, v in enumerate(ext.row_ids)}
    ids = [v for v in ef.row_ids if v in ext_pos]
    if not ids:
        raise ValueError("embedding and feature tables share no ids")
    n_emb_only = len(ef.row_ids) - len(ids)
    n_ext_only = len(ext.row_ids) - len(ids)
    if n_emb_only or n_ext_only:
        logger.warning("assemble_features: excluded %d ids without features and %d without embeddings",
                       n_emb_only, n_ext_only)
    emb_pos = {v: i for i, v in enumerate(ef.row_ids)}
    values = np.hstack([ef.values[[emb_pos[v] for v in ids]], ext.values[[ext_pos[v] for v in ids]]])
    return FeatureMatrix(ids, ef.col_names + ext.col_names, values)


@dataclass(frozen=True)
class FoldSpec:
    index: int
    positives: tuple[str, ...]
    negatives: tuple[str, ...]

    @property
    def ids(self) -> tuple[str, ...]:
        return self.positives + self.negatives


def fold_sizes(n_pos: int, positive_frac: float = 0.8, neg_ratio: int = 2) -> tuple[int, int]:
    k = math.floor(Fraction(str(positive_frac)) * n_pos)
    return k, neg_ratio * k


def subsample_folds(labels: LabelSet, M: int = 10, positive_frac: float = 0.8, neg_ratio: int = 2,
                    seed: int = 0) -> list[FoldSpec]:
    """Independent draws per fold: ``floor(positive_frac * |pos|)`` positives and
    ``neg_ratio`` times as many negatives, both without replacement."""
    if M < 1:
        raise ValueError("M must be >= 1")
    pos = sorted(labels.positives)
    neg = sorted(labels.negatives)
    k_pos, k_neg = fold_sizes(len(pos), positive_frac, neg_ratio)
    if k_pos < 1:
        raise ValueError(f"{len(pos)} positives give an empty fold at positive_frac={positive_frac}")
    if len(neg) < k_neg:
        raise ValueError(f"need {k_neg} negatives per fold, only {len(neg)} available")
    folds = []
    for f in range(M):
        rng = np.random.default_rng([seed, f])
        p = rng.choice(len(pos), k_pos, replace=False)
        n = rng.choice(len(neg), k_neg, replace=False)
        folds.append(FoldSpec(f, tuple(pos[i] for i in p), tuple(neg[i] for i in n)))
    return folds


@dataclass
class Ensemble:
    models: list
    folds: list[FoldSpec]
    kind: str
    params: dict = field(default_factory=dict)


def train_ensemble(X: FeatureMatrix, labels: LabelSet, M: int = 10, kind: str = "gbt",
                   params: dict | None = None, seed: int = 0, positive_frac: float = 0.8,
                   neg_ratio: int = 2) -> Ensemble:
    params = dict(params or {})
    row = {v: i for i, v in enumerate(X.row_ids)}
    missing = [v for v in labels.universe if v not in row]
    if missing:
        raise ValueError(f"{len(missing)} labelled ids have no features, e.g. {missing[0]!r}")
    folds = subsample_folds(labels, M, positive_frac, neg_ratio, seed)
    models = []
    for fs in folds:
        idx = [row[v] for v in fs.ids]
        y = np.r_[np.ones(len(fs.positives), np.int64), np.zeros(len(fs.negatives), np.int64)]
        models.append(make_classifier(kind, **params).fit(X.values[idx], y))
    return Ensemble(models, folds, kind, params)


def fold_probabilities(ens: Ensemble, X: np.ndarray) -> np.ndarray:
    """(M, n) matrix of per-fold positive-class probabilities."""
    return np.vstack([m.predict_proba(X) for m in ens.models])


def predict_ensemble(ens: Ensemble, X: FeatureMatrix, ids: Sequence[str] | None = None) -> list[tuple[str, float]]:
    """Mean fold probability per id, best first (ties by id)."""
    ids = list(X.row_ids if ids is None else ids)
    vals = X.rows(ids)
    total = np.zeros(len(ids))
    for m in ens.models:  # fixed fold order keeps the sum reproducible
        total += m.predict_proba(vals)
    score = total / len(ens.models)
    return sorted(zip(ids, score.tolist()), key=lambda t: (-t[1], t[0]))


def write_predictions(rows: Sequence[tuple[str, float]], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write("id,score\n")
        for v, s in rows:
            fh.write(f"{v},{s:.9g}\n")


def read_predictions(path: str | Path) -> dict[str, float]:
    out = {}
    with Path(path).open(encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "id,score":
            raise ValueError(f"{path}: expected header 'id,score'")
        for line in fh:
            if line.strip():
                v, s = line.rstrip("\n").rsplit(",", 1)
                out[v] = float(s)
    return out


@dataclass
class PipelineConfig:
    M: int = 10
    positive_frac: float = 0.8
    neg_ratio: int = 2
    cv_folds: int = 5
    corr_threshold: float = 0.85
    node2vec: Node2VecConfig = field(default_factory=Node2VecConfig)
    line: LineConfig = field(default_factory=LineConfig)
    imgagn: ImgagnConfig = field(default_factory=ImgagnConfig)


def embed(method: str, g: Graph, node_features: FeatureMatrix | None, labels: LabelSet | None,
          cfg: PipelineConfig, seed: int):
    """Run one embedder. Returns ``(embedding, train_log_or_history)``."""
    s = derive_seed(seed, method)
    if method == "node2vec":
        hist: list = []
        return node2vec_embed(g, cfg.node2vec, s, hist), {"epoch_loss": hist}
    if method == "line":
        hist2: dict = {}
        return line_train(g, cfg.line, s, hist2), {"chunk_loss": hist2}
    if method == "imgagn":
        if node_features is None or labels is None:
            raise ValueError("imgagn needs node features and labels")
        return train_imgagn(g, node_features, labels, cfg.imgagn, s)
    raise ValueError(f"unknown embedding method {method!r}; expected one of {METHODS}")


def cross_validate(g: Graph, node_features: FeatureMatrix | None, ext: FeatureMatrix | None,
                   labels: LabelSet, method: str | None, kind: str, params: dict | None,
                   cfg: PipelineConfig, seed: int = 0, embeddings: dict | None = None,
                   fold_cache: dict | None = None) -> dict:
    """Stratified k-fold AUC of the whole pipeline.

    Supervised embeddings (imgagn) are retrained inside every fold on that
    fold's training labels only; unsupervised ones are computed once (or
    taken from ``embeddings``). ``method=None`` uses the extended features alone.
    Per-fold supervised embeddings are stored in ``fold_cache`` when given, so
    several classifiers can share them.
    """
    ext_f = correlation_filter(ext, cfg.corr_threshold)[0] if ext is not None else None
    universe = list(labels.universe)
    fold_of = stratified_folds(labels.y(universe), cfg.cv_folds, derive_seed(seed, "cv"))
    shared = None
    if method in ("node2vec", "line"):
        shared = (embeddings or {}).get(method) or embed(method, g, None, None, cfg, seed)[0]
    aucs = []
    for f in range(cfg.cv_folds):
        train_ids = [v for v, k in zip(universe, fold_of) if k != f]
        test_ids = [v for v, k in zip(universe, fold_of) if k == f]
        train_labels = labels.subset(train_ids)
        if method == "imgagn":
            cache = fold_cache if fold_cache is not None else {}
            if f not in cache:
                cache[f] = embed(method, g, node_features, train_labels, cfg, derive_seed(seed, f"cv{f}"))[0]
            emb = cache[f]
        else:
            emb = shared
        X = assemble_features(emb, ext_f)
        ens = train_ensemble(X, train_labels, cfg.M, kind, params, derive_seed(seed, f"ens{f}"),
                             cfg.positive_frac, cfg.neg_ratio)
        scores = dict(predict_ensemble(ens, X, test_ids))
        aucs.append(auc_roc([scores[v] for v in test_ids], labels.y(test_ids)))
    return {"fold_auc": aucs, "mean_auc": float(np.mean(aucs))}
