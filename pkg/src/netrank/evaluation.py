"""AUC, stratified CV grid search, one-sided Fisher test, percentile overlap and enrichment curves."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)


def auc_roc(scores, labels) -> float:
    """Rank-statistic AUC: (concordant pairs + ties / 2) / (positives * negatives)."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs at least one positive and one negative")
    neg = np.sort(s[~y])
    pos = s[y]
    below = np.searchsorted(neg, pos, side="left")
    ties = np.searchsorted(neg, pos, side="right") - below
    concordant = int(below.sum())
    tied = int(ties.sum())
    return (concordant + 0.5 * tied) / (n_pos * n_neg)


def stratified_folds(y, k: int = 5, seed: int = 0) -> np.ndarray:
    """Fold index per row; each class is shuffled and dealt round-robin."""
    y = np.asarray(y).astype(bool)
    if k < 2:
        raise ValueError("k must be >= 2")
    for cls in (True, False):
        if np.count_nonzero(y == cls) < k:
            raise ValueError(f"class {int(cls)} has fewer than k={k} members")
    rng = np.random.default_rng(seed)
    fold = np.empty(len(y), dtype=np.int64)
    for cls in (True, False):
        idx = rng.permutation(np.flatnonzero(y == cls))
        fold[idx] = np.arange(len(idx)) % k
    return fold


def cross_val_grid_search(X, y, grid: Sequence[Mapping], make_model: Callable[..., object],
                          k: int = 5, seed: int = 0):
    """Mean held-out AUC per parameter set; the first best in grid order wins.

    ``make_model(**params)`` must return an object with ``fit`` and ``predict_proba``.
    """
    if not grid:
        raise ValueError("empty grid")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    fold = stratified_folds(y, k, seed)
    means = []
    for params in grid:
        aucs = []
        for f in range(k):
            tr, te = fold != f, fold == f
            model = make_model(**params).fit(X[tr], y[tr])
            aucs.append(auc_roc(model.predict_proba(X[te]), y[te]))
        means.append(float(np.mean(aucs)))
    best = int(np.argmax(means))
    return dict(grid[best]), means


@dataclass(frozen=True)
class ContingencyTable:
    """2x2 table ``[[a, b], [c, d]]``; rows = in set / not, columns = known / not."""

    a: int
    b: int
    c: int
    d: int

    def __post_init__(self):
        if min(self.a, self.b, self.c, self.d) < 0:
            raise ValueError("counts must be non-negative")
        if self.n < 1:
            raise ValueError("table is empty")

    @property
    def n(self) -> int:
        return self.a + self.b + self.c + self.d


def _log_comb(n: int, k: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def fisher_log_p_greater(t: ContingencyTable) -> float:
    """Natural log of P(X >= a) under the hypergeometric law with the table's margins."""
    row1, col1, n = t.a + t.b, t.a + t.c, t.n
    hi = min(row1, col1)
    lo = max(0, row1 + col1 - n)
    if t.a <= lo:
        return 0.0
    denom = _log_comb(n, row1)
    terms = np.array([_log_comb(col1, k) + _log_comb(n - col1, row1 - k) - denom
                      for k in range(t.a, hi + 1)])
    top = terms.max()
    return min(0.0, float(top + math.log(np.exp(terms - top).sum())))


def fisher_exact_greater(t: ContingencyTable) -> float:
    """One-sided (enrichment) Fisher exact p-value."""
    return math.exp(fisher_log_p_greater(t))


def enrichment_score(t: ContingencyTable) -> float:
    """-log10 of the one-sided Fisher p-value, finite even when p underflows."""
    return -fisher_log_p_greater(t) / math.log(10.0)


def rank_ids(scores: Mapping[str, float]) -> list[str]:
    """Ids by descending score, ties broken by id."""
    return sorted(scores, key=lambda v: (-scores[v], v))


@dataclass
class OverlapBin:
    lo_pct: float
    hi_pct: float
    size: int
    overlap: int
    p_value: float


def percentile_overlap(ranking: Sequence[str], known: Iterable[str],
                       bin_width: float = 0.05) -> list[OverlapBin]:
    """Known positives per descending-score percentile bin, each with a Fisher p-value.

    ``ranking`` is ordered best first. Bins hold ``len // n_bins`` genes and
    the last absorbs the remainder.
    """
    ranking = list(ranking)
    n = len(ranking)
    if n == 0:
        raise ValueError("empty ranking")
    known = set(known) & set(ranking)
    n_bins = min(max(1, round(1.0 / bin_width)), n)
    size = n // n_bins
    hits = np.array([v in known for v in ranking], dtype=np.int64)
    bins = []
    for b in range(n_bins):
        lo = b * size
        hi = n if b == n_bins - 1 else lo + size
        a = int(hits[lo:hi].sum())
        t = ContingencyTable(a, (hi - lo) - a, len(known) - a, n - (hi - lo) - (len(known) - a))
        bins.append(OverlapBin(100.0 * lo / n, 100.0 * hi / n, hi - lo, a, fisher_exact_greater(t)))
    return bins


class GeneSetCollection(dict):
    """Named gene sets, as read from a GMT file."""

    def __init__(self, sets: Mapping[str, Iterable[str]] | None = None):
        super().__init__()
        for name, members in (sets or {}).items():
            self.add(name, members)

    def add(self, name: str, members: Iterable[str]) -> None:
        if name in self:
            raise ValueError(f"duplicate gene set name {name!r}")
        members = frozenset(members)
        if not members:
            raise ValueError(f"gene set {name!r} is empty")
        self[name] = members


def read_gmt(path: str | Path) -> GeneSetCollection:
    gsc = GeneSetCollection()
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = [p.strip() for p in line.rstrip("\n").split("\t")]
            if not parts[0]:
                continue
            if len(parts) < 3:
                raise ValueError(f"{path}:{lineno}: expected name, description and members")
            gsc.add(parts[0], (p for p in parts[2:] if p))
    return gsc


def write_gmt(gsc: Mapping[str, Iterable[str]], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for name, members in gsc.items():
            fh.write("\t".join([name, "na", *sorted(members)]) + "\n")


def enrichment_scores(query: Iterable[str], pathways: Mapping[str, Iterable[str]],
                      universe: Iterable[str]) -> dict[str, float]:
    universe = set(universe)
    query = set(query)
    if not query <= universe:
        raise ValueError("query must be a subset of the universe")
    out = {}
    for name, members in pathways.items():
        p = set(members) & universe
        if not p:
            logger.warning("pathway %r shares no genes with the universe", name)
            out[name] = 0.0
            continue
        a = len(query & p)
        t = ContingencyTable(a, len(query) - a, len(p) - a, len(universe) - len(query) - len(p) + a)
        out[name] = max(0.0, enrichment_score(t))
    return out


def moving_average(series, window: int = 15) -> np.ndarray:
    """Centred mean; near the ends the window shrinks symmetrically."""
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be a positive odd integer")
    x = np.asarray(series, dtype=np.float64)
    n = len(x)
    half = window // 2
    c = np.concatenate([[0.0], np.cumsum(x)])
    i = np.arange(n)
    r = np.minimum(np.minimum(i, n - 1 - i), half)
    return (c[i + r + 1] - c[i - r]) / (2 * r + 1)


def enrichment_curves(query: Iterable[str], reference: Iterable[str],
                      pathways: Mapping[str, Iterable[str]], universe: Iterable[str],
                      window: int = 15) -> list[dict]:
    """Per-pathway scores of ``query`` and ``reference``, ordered by reference score.

    Each row also carries both series smoothed with ``moving_average``.
    """
    universe = list(universe)
    q = enrichment_scores(query, pathways, universe)
    r = enrichment_scores(reference, pathways, universe)
    names = sorted(pathways, key=lambda k: (-r[k], k))
    if not names:
        return []
    w = min(window, len(names) if len(names) % 2 else len(names) - 1)
    qs = moving_average([q[k] for k in names], max(w, 1))
    rs = moving_average([r[k] for k in names], max(w, 1))
    return [{"pathway": k, "reference": r[k], "query": q[k],
             "reference_smoothed": float(rs[i]), "query_smoothed": float(qs[i])}
            for i, k in enumerate(names)]
