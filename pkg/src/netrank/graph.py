"""Directed graph in compressed adjacency form, node tables and file ingestion."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)


NODES_DIRECTIVE = "#nodes"


class InputError(ValueError):
    """Malformed or inconsistent input file."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def _csr(n: int, src: np.ndarray, dst: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(ptr, src + 1, 1)
    return np.cumsum(ptr), dst.astype(np.int64)


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable directed, unweighted graph.

    Node ``i`` is ``node_ids[i]``. ``out_ptr``/``out_idx`` hold successors in
    CSR form and ``in_ptr``/``in_idx`` the transpose; both are sorted per row.
    """

    node_ids: tuple[str, ...]
    out_ptr: np.ndarray
    out_idx: np.ndarray
    in_ptr: np.ndarray
    in_idx: np.ndarray
    n_duplicates: int = 0
    _index: dict = field(default=None, repr=False, compare=False)

    @classmethod
    def from_edges(cls, node_ids: Sequence[str], edges: Iterable[tuple[int, int]],
                   n_duplicates: int = 0) -> "Graph":
        node_ids = tuple(node_ids)
        n = len(node_ids)
        if len(set(node_ids)) != n:
            raise InputError("node ids must be unique")
        e = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= n):
            raise InputError("edge endpoint out of range")
        if len(e):
            uniq = np.unique(e, axis=0)
            n_duplicates += len(e) - len(uniq)
            e = uniq
        out_ptr, out_idx = _csr(n, e[:, 0], e[:, 1])
        in_ptr, in_idx = _csr(n, e[:, 1], e[:, 0])
        return cls(node_ids, _frozen(out_ptr), _frozen(out_idx), _frozen(in_ptr),
                   _frozen(in_idx), n_duplicates, {v: i for i, v in enumerate(node_ids)})

    def __post_init__(self):
        if self._index is None:
            object.__setattr__(self, "_index", {v: i for i, v in enumerate(self.node_ids)})

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (self.node_ids == other.node_ids
                and np.array_equal(self.out_ptr, other.out_ptr)
                and np.array_equal(self.out_idx, other.out_idx))

    __hash__ = None

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def n_edges(self) -> int:
        return int(self.out_ptr[-1])

    def index(self, node_id: str) -> int:
        return self._index[node_id]

    def __contains__(self, node_id: str) -> bool:
        return node_id in self._index

    def edges(self) -> np.ndarray:
        """(n_edges, 2) array of (source, target), sorted lexicographically."""
        src = np.repeat(np.arange(self.n_nodes), np.diff(self.out_ptr))
        return np.column_stack([src, self.out_idx])

    def out_degree(self) -> np.ndarray:
        return np.diff(self.out_ptr)

    def in_degree(self) -> np.ndarray:
        return np.diff(self.in_ptr)

    @property
    def self_loops(self) -> int:
        e = self.edges()
        return int(np.count_nonzero(e[:, 0] == e[:, 1]))

    def undirected(self) -> sp.csr_matrix:
        """Symmetric 0/1 adjacency of the undirected view (in ∪ out)."""
        e = self.edges()
        n = self.n_nodes
        a = sp.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n)).tocsr()
        a = ((a + a.T) > 0).astype(np.float64)
        a.sort_indices()
        return a.tocsr()

    def with_isolated(self, extra_ids: Iterable[str]) -> "Graph":
        """Copy of the graph with unseen ids appended as isolated nodes."""
        new = [v for v in dict.fromkeys(extra_ids) if v not in self._index]
        if not new:
            return self
        logger.warning("adding %d isolated nodes absent from the edge list", len(new))
        return Graph.from_edges(self.node_ids + tuple(new), map(tuple, self.edges()),
                                self.n_duplicates)


def neighbors(g: Graph, v: int, direction: str = "out") -> list[int]:
    if not 0 <= v < g.n_nodes:
        raise IndexError(f"node index {v} out of range for {g.n_nodes} nodes")
    if direction == "out":
        return g.out_idx[g.out_ptr[v]:g.out_ptr[v + 1]].tolist()
    if direction == "in":
        return g.in_idx[g.in_ptr[v]:g.in_ptr[v + 1]].tolist()
    raise ValueError(f"direction must be 'out' or 'in', got {direction!r}")


def load_edge_list(path: str | Path) -> Graph:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    index: dict[str, int] = {}
    edges: list[tuple[int, int]] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if line.startswith(NODES_DIRECTIVE):
                for v in line.split("\t")[1:]:
                    index.setdefault(v, len(index))
                continue
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not all(p.strip() for p in parts):
                raise InputError(f"{path}:{lineno}: expected 2 tab-separated columns, got {len(parts)}")
            s, t = (p.strip() for p in parts)
            for v in (s, t):
                if v not in index:
                    index[v] = len(index)
            edges.append((index[s], index[t]))
    if not edges:
        raise InputError(f"{path}: no edges")
    g = Graph.from_edges(list(index), edges)
    if g.n_duplicates:
        logger.warning("%s: collapsed %d duplicate edges", path, g.n_duplicates)
    return g


def write_edge_list(g: Graph, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        # comment line to plain readers; pins node order and isolated nodes on reload
        fh.write(NODES_DIRECTIVE + "".join("\t" + v for v in g.node_ids) + "\n")
        for s, t in g.edges():
            fh.write(f"{g.node_ids[s]}\t{g.node_ids[t]}\n")


@dataclass(frozen=True)
class FeatureMatrix:
    row_ids: tuple[str, ...]
    col_names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "row_ids", tuple(self.row_ids))
        object.__setattr__(self, "col_names", tuple(self.col_names))
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape != (len(self.row_ids), len(self.col_names)):
            raise InputError(f"values shape {v.shape} does not match "
                             f"{len(self.row_ids)} rows x {len(self.col_names)} columns")
        if not self.col_names:
            raise InputError("feature matrix needs at least one column")
        if len(set(self.row_ids)) != len(self.row_ids):
            raise InputError("duplicate row ids")
        if not np.all(np.isfinite(v)):
            raise InputError("non-finite feature values")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def rows(self, ids: Sequence[str]) -> np.ndarray:
        pos = {r: i for i, r in enumerate(self.row_ids)}
        try:
            return self.values[[pos[i] for i in ids]]
        except KeyError as exc:
            raise KeyError(f"no features for id {exc.args[0]!r}") from None


def load_feature_table(path: str | Path) -> FeatureMatrix:
    path = Path(path)
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        if not header or header[0].strip() != "id":
            raise InputError(f"{path}: header must start with 'id'")
        cols = [c.strip() for c in header[1:]]
        ids, rows, seen = [], [], set()
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != len(header):
                raise InputError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
            rid = row[0].strip()
            if rid in seen:
                raise InputError(f"{path}:{lineno}: duplicate id {rid!r}")
            seen.add(rid)
            vals = []
            for j, cell in enumerate(row[1:]):
                try:
                    x = float(cell)
                except ValueError:
                    raise InputError(f"{path}:{lineno}: column {cols[j]!r}: not a number: {cell!r}") from None
                if not math.isfinite(x):
                    raise InputError(f"{path}:{lineno}: column {cols[j]!r}: non-finite value {cell!r}")
                vals.append(x)
            ids.append(rid)
            rows.append(vals)
    return FeatureMatrix(ids, cols, np.array(rows, dtype=np.float64).reshape(len(ids), len(cols)))


def write_feature_table(fm: FeatureMatrix, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", *fm.col_names])
        for rid, row in zip(fm.row_ids, fm.values):
            w.writerow([rid, *(repr(float(x)) for x in row)])


@dataclass(frozen=True)
class LabelSet:
    positives: frozenset[str]
    universe: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "positives", frozenset(self.positives))
        object.__setattr__(self, "universe", tuple(self.universe))
        if len(set(self.universe)) != len(self.universe):
            raise InputError("duplicate ids in label universe")
        if not self.positives <= set(self.universe):
            raise InputError("positives must be a subset of the universe")
        if not 0 < len(self.positives) < len(self.universe):
            raise InputError("label set needs at least one positive and one negative")

    @property
    def negatives(self) -> tuple[str, ...]:
        return tuple(v for v in self.universe if v not in self.positives)

    def y(self, ids: Sequence[str] | None = None) -> np.ndarray:
        ids = self.universe if ids is None else ids
        return np.array([v in self.positives for v in ids], dtype=np.int64)

    def subset(self, ids: Iterable[str]) -> "LabelSet":
        keep = set(ids)
        uni = [v for v in self.universe if v in keep]
        return LabelSet(self.positives & keep, uni)


def load_labels(path: str | Path) -> LabelSet:
    path = Path(path)
    labels: dict[str, int] = {}
    with path.open(encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or row[0].startswith("#"):
                continue
            if len(row) != 2:
                raise InputError(f"{path}:{lineno}: expected 'id,label'")
            rid, lab = row[0].strip(), row[1].strip()
            if lineno == 1 and (rid, lab) == ("id", "label"):
                continue
            if lab not in ("0", "1"):
                raise InputError(f"{path}:{lineno}: label must be 0 or 1, got {lab!r}")
            if rid in labels and labels[rid] != int(lab):
                raise InputError(f"{path}:{lineno}: conflicting labels for {rid!r}")
            labels[rid] = int(lab)
    pos = {k for k, v in labels.items() if v == 1}
    if not pos:
        raise InputError(f"{path}: no positive labels")
    return LabelSet(pos, list(labels))


def write_labels(labels: LabelSet, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write("id,label\n")
        for v in labels.universe:
            fh.write(f"{v},{int(v in labels.positives)}\n")


@dataclass(frozen=True)
class EmbeddingMatrix:
    row_ids: tuple[str, ...]
    values: np.ndarray
    method: str = ""
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "row_ids", tuple(self.row_ids))
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != len(self.row_ids):
            raise InputError(f"embedding shape {v.shape} does not match {len(self.row_ids)} ids")
        if not np.all(np.isfinite(v)):
            raise InputError("non-finite embedding values")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def as_features(self, prefix: str = "emb") -> FeatureMatrix:
        return FeatureMatrix(self.row_ids, [f"{prefix}{j}" for j in range(self.dim)], self.values)


def write_embeddings(emb: EmbeddingMatrix, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(f"# dim={emb.dim} method={emb.method} seed={emb.seed}\n")
        for rid, row in zip(emb.row_ids, emb.values):
            fh.write(rid + "\t" + "\t".join(f"{x:.9g}" for x in row) + "\n")


def read_embeddings(path: str | Path) -> EmbeddingMatrix:
    path = Path(path)
    meta, ids, rows = {}, [], []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if line.startswith("#"):
                meta.update(kv.split("=", 1) for kv in line[1:].split() if "=" in kv)
                continue
            if not line:
                continue
            parts = line.split("\t")
            ids.append(parts[0])
            rows.append([float(x) for x in parts[1:]])
    dim = int(meta.get("dim", len(rows[0]) if rows else 0))
    if any(len(r) != dim for r in rows):
        raise InputError(f"{path}: rows do not all have {dim} values")
    seed = meta.get("seed")
    return EmbeddingMatrix(ids, np.array(rows).reshape(len(ids), dim), meta.get("method", ""),
                           None if seed in (None, "None") else int(seed))
