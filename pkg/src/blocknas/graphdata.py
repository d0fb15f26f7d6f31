"""Graph datasets, node splits and normalized adjacency structures.

Supported inputs:

* Planetoid raw files: ``<name>.content`` rows ``id feat_1 .. feat_k label``
  and ``<name>.cites`` rows ``cited citing``.
* A CSV triple with headers: features (``node_id,f0,..``), edges
  (``src,dst``) and labels (``node_id,label``).  Any of the three may be
  gzip-compressed (``.gz`` suffix).
* The dataset cache (``.npz``) written by :func:`save_graph`.  Arrays:
  ``features`` float64 [n, k], ``edges`` int64 [m, 2] with ``src < dst``,
  ``labels`` int64 [n], ``node_ids`` unicode [n], ``class_names`` unicode
  [c] and the scalar ``raw_edge_count``.

All structures are immutable after construction.
"""
from __future__ import annotations

import csv
import gzip
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)


class DataFormatError(ValueError):
    """Malformed or inconsistent dataset file."""


class SplitError(ValueError):
    """A split cannot be drawn with the requested sizes."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Graph:
    features: np.ndarray
    edges: np.ndarray
    labels: np.ndarray
    num_classes: int
    node_ids: tuple[str, ...] = ()
    class_names: tuple[str, ...] = ()
    raw_edge_count: int = -1
    dropped_edges: int = 0

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        labels = np.asarray(self.labels, dtype=np.int64)
        if feats.ndim != 2 or feats.shape[1] == 0:
            raise DataFormatError("features must be a non-empty 2-D matrix")
        n = feats.shape[0]
        if labels.shape != (n,):
            raise DataFormatError(f"expected {n} labels, got {labels.shape}")
        if len(edges) and (edges.min() < 0 or edges.max() >= n):
            raise DataFormatError("edge endpoint out of range")
        if n and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise DataFormatError("label out of range")
        edges = canonical_edges(edges)
        object.__setattr__(self, "features", _readonly(feats))
        object.__setattr__(self, "edges", _readonly(edges))
        object.__setattr__(self, "labels", _readonly(labels))
        if not self.node_ids:
            object.__setattr__(self, "node_ids", tuple(str(i) for i in range(n)))
        if self.raw_edge_count < 0:
            object.__setattr__(self, "raw_edge_count", len(edges))

    @property
    def num_nodes(self) -> int:
        return self.features.shape[0]

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    def summary(self) -> str:
        return (f"{self.num_nodes} nodes, {self.raw_edge_count} edges, "
                f"{self.num_features} features, {self.num_classes} classes")


def canonical_edges(edges: np.ndarray) -> np.ndarray:
    """Symmetrize an edge list: one ``(min, max)`` row per undirected edge, self-loops dropped."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    edges = edges[edges[:, 0] != edges[:, 1]]
    if not len(edges):
        return np.zeros((0, 2), dtype=np.int64)
    lo = edges.min(axis=1)
    hi = edges.max(axis=1)
    return np.unique(np.stack([lo, hi], axis=1), axis=0)


def _open_text(path: Path):
    path = Path(path)
    if path.suffix == ".gz":
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8", newline="")
    return open(path, encoding="utf-8", newline="")


def _labels_to_ints(raw: list[str]) -> tuple[np.ndarray, tuple[str, ...]]:
    names = sorted(set(raw))
    lookup = {name: i for i, name in enumerate(names)}
    return np.array([lookup[r] for r in raw], dtype=np.int64), tuple(names)


def load_cora_raw(content_path, cites_path) -> Graph:
    """Read a Planetoid-style ``.content``/``.cites`` pair."""
    ids: list[str] = []
    rows: list[np.ndarray] = []
    raw_labels: list[str] = []
    width = None
    with _open_text(content_path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 3:
                raise DataFormatError(f"{content_path}:{lineno}: expected 'id features.. label'")
            if width is None:
                width = len(parts) - 2
            elif len(parts) - 2 != width:
                raise DataFormatError(
                    f"{content_path}:{lineno}: {len(parts) - 2} features, expected {width}")
            try:
                rows.append(np.array(parts[1:-1], dtype=np.float64))
            except ValueError as exc:
                raise DataFormatError(f"{content_path}:{lineno}: {exc}") from None
            ids.append(parts[0])
            raw_labels.append(parts[-1])
    if not ids:
        raise DataFormatError(f"{content_path}: no node rows")
    if len(set(ids)) != len(ids):
        raise DataFormatError(f"{content_path}: duplicate node ids")
    index = {nid: i for i, nid in enumerate(ids)}

    edges = []
    raw_count = dropped = 0
    with _open_text(cites_path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise DataFormatError(f"{cites_path}:{lineno}: expected 'cited citing'")
            raw_count += 1
            a, b = index.get(parts[0]), index.get(parts[1])
            if a is None or b is None:
                dropped += 1
                continue
            edges.append((a, b))
    if dropped:
        logger.warning("dropped %d citations referencing unknown ids", dropped)
    labels, names = _labels_to_ints(raw_labels)
    return Graph(np.vstack(rows), np.array(edges, dtype=np.int64), labels, len(names),
                 node_ids=tuple(ids), class_names=names,
                 raw_edge_count=raw_count, dropped_edges=dropped)


def _read_csv(path) -> tuple[list[str], list[list[str]]]:
    with _open_text(path) as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        body = [row for row in reader if row]
    return header, body


def load_edgelist(features_csv, edges_csv, labels_csv) -> Graph:
    """Read the generic CSV triple (features, edges, labels)."""
    header, body = _read_csv(features_csv)
    if len(header) < 2 or not body:
        raise DataFormatError(f"{features_csv}: need a node id column, features and rows")
    ids = []
    feats = np.empty((len(body), len(header) - 1))
    for lineno, row in enumerate(body, 2):
        if len(row) != len(header):
            raise DataFormatError(f"{features_csv}:{lineno}: {len(row)} columns, expected {len(header)}")
        ids.append(row[0])
        try:
            feats[lineno - 2] = np.asarray(row[1:], dtype=np.float64)
        except ValueError as exc:
            raise DataFormatError(f"{features_csv}:{lineno}: {exc}") from None
    index = {nid: i for i, nid in enumerate(ids)}
    if len(index) != len(ids):
        raise DataFormatError(f"{features_csv}: duplicate node ids")

    _, label_rows = _read_csv(labels_csv)
    raw_labels: list[str | None] = [None] * len(ids)
    for lineno, row in enumerate(label_rows, 2):
        if len(row) != 2:
            raise DataFormatError(f"{labels_csv}:{lineno}: expected 'node_id,label'")
        if row[0] not in index:
            raise DataFormatError(f"{labels_csv}:{lineno}: unknown node id {row[0]!r}")
        raw_labels[index[row[0]]] = row[1]
    missing = [ids[i] for i, lab in enumerate(raw_labels) if lab is None]
    if missing:
        raise DataFormatError(f"{labels_csv}: no label for node {missing[0]!r}")
    if all(lab.lstrip("-").isdigit() for lab in raw_labels):
        labels = np.array([int(lab) for lab in raw_labels], dtype=np.int64)
        names = tuple(str(c) for c in range(int(labels.max()) + 1))
    else:
        labels, names = _labels_to_ints(raw_labels)

    _, edge_rows = _read_csv(edges_csv)
    edges = np.empty((len(edge_rows), 2), dtype=np.int64)
    for lineno, row in enumerate(edge_rows, 2):
        if len(row) != 2:
            raise DataFormatError(f"{edges_csv}:{lineno}: expected 'src,dst'")
        try:
            edges[lineno - 2] = (index[row[0]], index[row[1]])
        except KeyError as exc:
            raise DataFormatError(f"{edges_csv}:{lineno}: node id {exc.args[0]!r} has no feature row") from None
    return Graph(feats, edges, labels, len(names), node_ids=tuple(ids),
                 class_names=names, raw_edge_count=len(edge_rows))


def save_graph(g: Graph, path) -> None:
    with open(path, "wb") as fh:
        np.savez(fh, features=g.features, edges=g.edges, labels=g.labels,
                 node_ids=np.array(g.node_ids, dtype=str),
                 class_names=np.array(g.class_names, dtype=str),
                 raw_edge_count=np.int64(g.raw_edge_count),
                 num_classes=np.int64(g.num_classes))


def load_graph(path) -> Graph:
    with np.load(path, allow_pickle=False) as z:
        return Graph(z["features"].copy(), z["edges"].copy(), z["labels"].copy(),
                     int(z["num_classes"]), node_ids=tuple(z["node_ids"].tolist()),
                     class_names=tuple(z["class_names"].tolist()),
                     raw_edge_count=int(z["raw_edge_count"]))


def load_dataset(path, fmt: str | None = None) -> Graph:
    """Load by directory or file, guessing the format when ``fmt`` is None.

    A directory holding ``*.content``/``*.cites`` is Planetoid raw; one holding
    ``features.csv[.gz]``, ``edges.csv[.gz]`` and ``labels.csv[.gz]`` is the
    CSV triple; a ``.npz`` file is the cache layout.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    if fmt is None:
        if path.is_file() and path.suffix == ".npz":
            fmt = "npz"
        elif path.is_dir() and list(path.glob("*.content")):
            fmt = "planetoid"
        elif path.is_dir():
            fmt = "csv"
        else:
            raise DataFormatError(f"cannot infer dataset format of {path}")
    if fmt == "npz":
        return load_graph(path)
    if fmt == "planetoid":
        content = sorted(path.glob("*.content"))
        if not content:
            raise DataFormatError(f"{path}: no .content file")
        cites = content[0].with_suffix(".cites")
        return load_cora_raw(content[0], cites)
    if fmt == "csv":
        def pick(stem):
            for name in (f"{stem}.csv", f"{stem}.csv.gz"):
                if (path / name).exists():
                    return path / name
            raise DataFormatError(f"{path}: missing {stem}.csv")
        return load_edgelist(pick("features"), pick("edges"), pick("labels"))
    raise DataFormatError(f"unknown dataset format {fmt!r}")


def row_normalize_features(g: Graph) -> Graph:
    feats = np.asarray(g.features)
    if (feats < 0).any():
        raise DataFormatError("row normalization needs non-negative features")
    sums = feats.sum(axis=1, keepdims=True)
    scale = np.divide(1.0, sums, out=np.ones_like(sums), where=sums > 0)
    return Graph(feats * scale, g.edges, g.labels, g.num_classes, node_ids=g.node_ids,
                 class_names=g.class_names, raw_edge_count=g.raw_edge_count,
                 dropped_edges=g.dropped_edges)


def induced_subgraph(g: Graph, nodes) -> Graph:
    nodes = np.asarray(nodes, dtype=np.int64)
    remap = -np.ones(g.num_nodes, dtype=np.int64)
    remap[nodes] = np.arange(len(nodes))
    e = remap[g.edges]
    e = e[(e >= 0).all(axis=1)]
    return Graph(g.features[nodes], e, g.labels[nodes], g.num_classes,
                 node_ids=tuple(g.node_ids[i] for i in nodes), class_names=g.class_names,
                 raw_edge_count=len(e))


def bfs_subsample(g: Graph, size: int, seed: int = 0) -> Graph:
    """Induced subgraph on ``size`` nodes collected breadth-first.

    The walk starts at a highest-degree node (ties shuffled by ``seed``) and
    restarts at the next unvisited high-degree node when a component runs out.
    """
    if not 0 < size <= g.num_nodes:
        raise SplitError(f"subsample size {size} outside (0, {g.num_nodes}]")
    rng = np.random.default_rng(seed)
    adj = sp.coo_matrix((np.ones(2 * g.num_edges), (np.r_[g.edges[:, 0], g.edges[:, 1]],
                                                     np.r_[g.edges[:, 1], g.edges[:, 0]])),
                        shape=(g.num_nodes, g.num_nodes)).tocsr()
    degree = np.diff(adj.indptr)
    # highest-degree nodes first as restart points, shuffled within equal degree
    restart = np.lexsort((rng.permutation(g.num_nodes), -degree))
    seen = np.zeros(g.num_nodes, dtype=bool)
    order: list[int] = []
    r = 0
    while len(order) < size:
        while seen[restart[r]]:
            r += 1
        queue = [int(restart[r])]
        seen[queue[0]] = True
        head = 0
        while head < len(queue) and len(order) < size:
            u = queue[head]
            head += 1
            order.append(u)
            for v in adj.indices[adj.indptr[u]:adj.indptr[u + 1]]:
                if not seen[v]:
                    seen[v] = True
                    queue.append(int(v))
        for v in queue[head:]:
            seen[v] = False
    return induced_subgraph(g, np.sort(order))


@dataclass(frozen=True, eq=False)
class SplitMasks:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        for name in ("train", "val", "test"):
            m = np.asarray(getattr(self, name), dtype=bool)
            if not m.any():
                raise SplitError(f"{name} mask is empty")
            object.__setattr__(self, name, _readonly(m))
        if (self.train & self.val).any() or (self.train & self.test).any() or (self.val & self.test).any():
            raise SplitError("split masks overlap")

    def sizes(self) -> tuple[int, int, int]:
        return int(self.train.sum()), int(self.val.sum()), int(self.test.sum())


def _mask(n: int, idx) -> np.ndarray:
    m = np.zeros(n, dtype=bool)
    m[np.asarray(idx, dtype=np.int64)] = True
    return m


def semi_split(g: Graph, per_class: int = 20, n_val: int = 500, n_test: int = 1000,
               seed: int = 0) -> SplitMasks:
    """``per_class`` training nodes of every class; val/test drawn from the rest."""
    if per_class <= 0:
        raise SplitError("per_class must be positive (empty training set)")
    n = g.num_nodes
    if per_class * g.num_classes + n_val + n_test > n:
        raise SplitError(f"{per_class}x{g.num_classes} + {n_val} + {n_test} exceeds {n} nodes")
    rng = np.random.default_rng(seed)
    train = []
    for c in range(g.num_classes):
        members = np.flatnonzero(g.labels == c)
        if len(members) < per_class:
            name = g.class_names[c] if c < len(g.class_names) else str(c)
            raise SplitError(f"class {name!r} has {len(members)} nodes, needs {per_class}")
        train.append(rng.choice(members, per_class, replace=False))
    train = np.concatenate(train)
    rest = np.setdiff1d(np.arange(n), train)
    picked = rng.permutation(rest)[:n_val + n_test]
    return SplitMasks(_mask(n, train), _mask(n, picked[:n_val]), _mask(n, picked[n_val:]))


def full_split(g: Graph, train_frac: float = 0.6, val_frac: float = 0.2, seed: int = 0) -> SplitMasks:
    """Uniform per-node split; sizes are ``floor(frac * n)`` and test takes the remainder."""
    for name, frac in (("train_frac", train_frac), ("val_frac", val_frac)):
        if not 0.0 < frac < 1.0:
            raise SplitError(f"{name}={frac} outside (0, 1)")
    if train_frac + val_frac >= 1.0:
        raise SplitError("train_frac + val_frac must be < 1")
    n = g.num_nodes
    n_train = int(np.floor(train_frac * n))
    n_val = int(np.floor(val_frac * n))
    if n - n_train - n_val <= 0:
        raise SplitError("test split would be empty")
    perm = np.random.default_rng(seed).permutation(n)
    return SplitMasks(_mask(n, perm[:n_train]), _mask(n, perm[n_train:n_train + n_val]),
                      _mask(n, perm[n_train + n_val:]))


@dataclass(frozen=True, eq=False)
class NormAdj:
    """Sparse propagation structure with self-loops, rows sorted by target node.

    ``rows[e]`` is the target (aggregating) node and ``cols[e]`` the source,
    so ``out[i] = sum_e coeffs[e] * h[cols[e]]`` over ``rows[e] == i``.
    """
    num_nodes: int
    rows: np.ndarray
    cols: np.ndarray
    coeffs: np.ndarray
    indptr: np.ndarray
    degree: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def num_entries(self) -> int:
        return len(self.rows)

    def matrix(self, values=None) -> sp.csr_matrix:
        """CSR matrix over the stored pattern, weighted by ``values`` (default ``coeffs``)."""
        if values is None:
            if "gcn" not in self._cache:
                self._cache["gcn"] = self.matrix(self.coeffs)
            return self._cache["gcn"]
        n = self.num_nodes
        return sp.csr_matrix((np.asarray(values).ravel(), self.cols, self.indptr), shape=(n, n))

    def mean_matrix(self) -> sp.csr_matrix:
        if "mean" not in self._cache:
            self._cache["mean"] = self.matrix(1.0 / self.degree[self.rows])
        return self._cache["mean"]

    def gather_matrix(self, which: str) -> sp.csr_matrix:
        """[n x E] 0/1 matrix scattering per-entry values back onto ``rows`` or ``cols``."""
        key = "scatter_" + which
        if key not in self._cache:
            idx = self.rows if which == "rows" else self.cols
            E = self.num_entries
            self._cache[key] = sp.csr_matrix((np.ones(E), (idx, np.arange(E))), shape=(self.num_nodes, E))
        return self._cache[key]


def normalize_adjacency(g: Graph) -> NormAdj:
    """GCN renormalization ``c_ij = 1/sqrt(d_i d_j)`` with degrees counted after adding self-loops."""
    n = g.num_nodes
    e = g.edges
    loops = np.arange(n, dtype=np.int64)
    rows = np.concatenate([e[:, 0], e[:, 1], loops])
    cols = np.concatenate([e[:, 1], e[:, 0], loops])
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    degree = np.bincount(rows, minlength=n).astype(np.float64)
    coeffs = 1.0 / np.sqrt(degree[rows] * degree[cols])
    indptr = np.concatenate([[0], np.cumsum(np.bincount(rows, minlength=n))]).astype(np.int64)
    return NormAdj(n, _readonly(rows), _readonly(cols), _readonly(coeffs), _readonly(indptr),
                   _readonly(degree))
