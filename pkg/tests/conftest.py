from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from blocknas.graphdata import Graph  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]
CORA = ROOT / "data" / "cora"
CITESEER = ROOT / "data" / "citeseer"
CONFIGS = ROOT / "configs"
CODES = ROOT / "codes"


def make_graph(n: int, edges, num_classes: int = 2, dim: int = 4, seed: int = 0, labels=None) -> Graph:
    rng = np.random.default_rng(seed)
    feats = rng.random((n, dim))
    if labels is None:
        labels = np.arange(n) % num_classes
    return Graph(feats, np.array(edges, dtype=np.int64).reshape(-1, 2), np.asarray(labels), num_classes)


@pytest.fixture
def tiny_graph() -> Graph:
    """Six nodes: a triangle, a tail and an isolated node."""
    return make_graph(6, [(0, 1), (1, 2), (0, 2), (2, 3), (3, 4)], num_classes=2, dim=5)


@pytest.fixture(scope="session")
def cora():
    from blocknas.graphdata import load_dataset
    return load_dataset(CORA)
