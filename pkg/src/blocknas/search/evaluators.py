"""Reward functions for sampled codes: trained GNNs or synthetic oracles."""
from __future__ import annotations

import threading
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from blocknas import graphdata as gd
from blocknas.gnn import HyperParams, build_model, init_rng, train_model
from blocknas.search.oracles import FAMILIES, arch_oracle_spec, block_oracle_spec, oracle_reward
from blocknas.space import (
    ArchCode,
    BlockCode,
    SpaceConfig,
    serialize_code,
    standard_architecture,
)


@dataclass(frozen=True)
class DataSpec:
    path: str
    format: str | None = None
    subsample: int | None = None
    split: str = "semi"
    per_class: int = 20
    n_val: int = 500
    n_test: int = 1000
    train_frac: float = 0.6
    val_frac: float = 0.2
    seed: int = 0
    normalize_features: bool = True

    def __post_init__(self):
        if self.split not in ("semi", "full"):
            raise ValueError(f"split must be 'semi' or 'full', got {self.split!r}")
        if self.subsample is not None and self.subsample < 1:
            raise ValueError("subsample must be >= 1")


@dataclass(frozen=True, eq=False)
class Dataset:
    name: str
    graph: gd.Graph
    split: gd.SplitMasks
    adj: gd.NormAdj
    features: np.ndarray

    @property
    def in_dim(self) -> int:
        return self.graph.num_features

    @property
    def num_classes(self) -> int:
        return self.graph.num_classes


def prepare_dataset(spec: DataSpec) -> Dataset:
    g = gd.load_dataset(spec.path, spec.format)
    if spec.subsample is not None and spec.subsample < g.num_nodes:
        g = gd.bfs_subsample(g, spec.subsample, spec.seed)
    if spec.split == "semi":
        split = gd.semi_split(g, spec.per_class, spec.n_val, spec.n_test, spec.seed)
    else:
        split = gd.full_split(g, spec.train_frac, spec.val_frac, spec.seed)
    feats = gd.row_normalize_features(g).features if spec.normalize_features else g.features
    return Dataset(Path(spec.path).name, g, split, gd.normalize_adjacency(g), np.asarray(feats))


@dataclass
class Outcome:
    reward: float
    failed: bool = False
    detail: dict = field(default_factory=dict)


class Evaluator:
    """Maps a code to a reward in [0, 1]; results are cached per code."""

    kind = "abstract"

    def __init__(self):
        self._cache: dict[str, Outcome] = {}
        self._lock = threading.Lock()

    def __call__(self, code, pool=None) -> Outcome:
        key = serialize_code(code)
        if pool is not None and not isinstance(code, BlockCode):
            key += "|" + "|".join(serialize_code(b) for b in pool)
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        try:
            out = self._evaluate(code, pool)
        except (FloatingPointError, ArithmeticError) as exc:
            out = Outcome(0.0, True, {"error": str(exc)})
        with self._lock:
            self._cache.setdefault(key, out)
        return out

    def _evaluate(self, code, pool) -> Outcome:
        raise NotImplementedError

    def cache_items(self) -> dict[str, dict]:
        return {k: asdict(v) for k, v in self._cache.items()}

    def load_cache(self, items: dict[str, dict]) -> None:
        self._cache = {k: Outcome(**v) for k, v in items.items()}


class SyntheticEvaluator(Evaluator):
    kind = "synthetic"

    def __init__(self, family: str, space: SpaceConfig = SpaceConfig()):
        super().__init__()
        if family not in FAMILIES:
            raise ValueError(f"unknown oracle family {family!r}")
        self.family = family
        self.space = space

    def _evaluate(self, code, pool) -> Outcome:
        if isinstance(code, BlockCode):
            spec = block_oracle_spec(self.space)
        else:
            spec = arch_oracle_spec(len(pool), self.space)
        return Outcome(oracle_reward(code, self.family, spec))


class TrainingEvaluator(Evaluator):
    """Trains the standard architecture (block codes) or the decoded model (architecture codes)."""

    kind = "real"

    def __init__(self, data: Dataset, hp: HyperParams, space: SpaceConfig = SpaceConfig(), seed: int = 0):
        super().__init__()
        self.data = data
        self.hp = hp
        self.space = space
        self.seed = seed

    def model_for(self, code, pool=None):
        if isinstance(code, BlockCode):
            arch = standard_architecture(self.space, self.hp.dropout, self.hp.alpha)
            pool = [code]
        else:
            arch = code
        d = self.data
        return build_model(arch, list(pool), d.in_dim, d.num_classes, self.hp, init_rng(self.seed))

    def train(self, code, pool=None):
        m = self.model_for(code, pool)
        d = self.data
        result = train_model(m, d.graph, d.split, d.adj, self.seed, d.features)
        return m, result

    def _evaluate(self, code, pool) -> Outcome:
        _, r = self.train(code, pool)
        return Outcome(r.val_accuracy, r.failed, {"test_accuracy": r.test_accuracy,
                                                   "epochs_run": r.epochs_run, "best_epoch": r.best_epoch})
