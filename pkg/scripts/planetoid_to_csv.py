"""Convert a Planetoid ``ind.<name>.*`` bundle into the CSV triple read by
``blocknas.graphdata.load_edgelist``.

Usage::

    python scripts/planetoid_to_csv.py data/planetoid citeseer data/citeseer

Node ids follow the usual Planetoid ordering (``allx`` rows, then the test
rows placed at their ``test.index`` positions).  CiteSeer has test indices
without a feature row; those nodes get zero features and label 0.
"""
from __future__ import annotations

import csv
import gzip
import pickle
import sys
from pathlib import Path

import numpy as np
import scipy.sparse as sp


def _load(prefix: Path, part: str):
    with open(f"{prefix}.{part}", "rb") as fh:
        return pickle.load(fh, encoding="latin1")


def convert(src_dir: Path, name: str, out_dir: Path) -> None:
    prefix = src_dir / f"ind.{name}"
    allx, ally, tx, ty, graph = (_load(prefix, p) for p in ("allx", "ally", "tx", "ty", "graph"))
    test_idx = [int(line) for line in open(f"{prefix}.test.index")]
    lo, hi = min(test_idx), max(test_idx)

    n_tx = hi - lo + 1
    tx_full = sp.lil_matrix((n_tx, allx.shape[1]))
    ty_full = np.zeros((n_tx, ally.shape[1]))
    tx_full[np.array(test_idx) - lo, :] = tx
    ty_full[np.array(test_idx) - lo, :] = ty

    features = sp.vstack([allx, tx_full]).tolil()
    labels = np.vstack([ally, ty_full])
    order = np.sort(test_idx)
    features[test_idx, :] = features[order, :]
    labels[test_idx, :] = labels[order, :]
    features = features.toarray()
    labels = labels.argmax(axis=1)

    out_dir.mkdir(parents=True, exist_ok=True)
    with gzip.open(out_dir / "features.csv.gz", "wt", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node_id"] + [f"f{i}" for i in range(features.shape[1])])
        for i, row in enumerate(features):
            w.writerow([i] + [f"{v:g}" for v in row])
    with gzip.open(out_dir / "labels.csv.gz", "wt", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node_id", "label"])
        for i, lab in enumerate(labels):
            w.writerow([i, int(lab)])
    with gzip.open(out_dir / "edges.csv.gz", "wt", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["src", "dst"])
        n = features.shape[0]
        for src in sorted(graph):
            for dst in graph[src]:
                if src < n and dst < n:
                    w.writerow([src, dst])


if __name__ == "__main__":
    convert(Path(sys.argv[1]), sys.argv[2], Path(sys.argv[3]))
