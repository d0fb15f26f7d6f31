"""Assemble full models from architecture codes and run them."""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from blocknas import nn
from blocknas.graphdata import Graph, NormAdj, SplitMasks
from blocknas.gnn.layers import LayerParams, beta_at_depth, init_layer, layer_forward
from blocknas.nn import ParamStore, Tensor
from blocknas.space import ArchCode, ArchPlan, BlockCode, SpaceConfig, decode_arch
from blocknas.space.structure import BlockDAG


@dataclass(frozen=True)
class HyperParams:
    alpha: float = 0.3
    lam: float = 0.5
    dropout: float = 0.3
    hidden: int = 32
    lr: float = 0.01
    epochs: int = 400
    weight_decay_conv: float = 0.01
    weight_decay_fc: float = 4e-5
    fixed_beta: float | None = None
    dtype: str = "float32"

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha {self.alpha} outside [0, 1]")
        if self.lam <= 0:
            raise ValueError(f"lambda {self.lam} must be > 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout {self.dropout} outside [0, 1)")
        if self.hidden < 1 or self.epochs < 0:
            raise ValueError("hidden must be > 0 and epochs >= 0")
        if self.fixed_beta is not None and not 0.0 <= self.fixed_beta <= 1.0:
            raise ValueError("fixed_beta outside [0, 1]")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype!r}")

    def beta(self, depth: int) -> float:
        return self.fixed_beta if self.fixed_beta is not None else beta_at_depth(depth, self.lam)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "HyperParams":
        return cls(**d)


@dataclass(frozen=True)
class EvaluationResult:
    val_accuracy: float
    test_accuracy: float
    final_train_loss: float
    epochs_run: int
    wall_time: float
    best_epoch: int = 0
    failed: bool = False

    def __post_init__(self):
        for name in ("val_accuracy", "test_accuracy"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} {v} outside [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class BlockInstance:
    position: int
    dag: BlockDAG
    layers: dict
    dropout: float
    alpha: float
    residual_source: int | None


@dataclass
class ModelGraph:
    """Parameters plus wiring for one decoded architecture."""

    arch: ArchCode
    pool: tuple[BlockCode, ...]
    plan: ArchPlan
    in_dim: int
    num_classes: int
    hp: HyperParams
    params: ParamStore
    blocks: list[BlockInstance] = field(default_factory=list)

    @property
    def depth(self) -> int:
        return self.plan.depth

    @property
    def dtype(self):
        return np.dtype(self.hp.dtype)


def _permissive(arch: ArchCode, pool: Sequence[BlockCode]) -> SpaceConfig:
    # Models may be built outside the search tables (e.g. alpha 0 reductions).
    blocks = arch.blocks
    return SpaceConfig(max_layers=max(b.depth for b in pool), max_blocks=max(len(blocks), 1),
                       dropouts=tuple({g.dropout for g in blocks}) or (0.0,),
                       alphas=tuple({g.alpha for g in blocks}) or (0.0,))


def build_model(arch: ArchCode, pool: Sequence[BlockCode], in_dim: int, num_classes: int,
                hp: HyperParams, rng: np.random.Generator) -> ModelGraph:
    """Decode ``arch`` against ``pool`` and initialize every block instance's own weights."""
    pool = tuple(pool)
    plan = decode_arch(arch, pool, _permissive(arch, pool))
    dtype = np.dtype(hp.dtype)
    store = ParamStore()
    store.add("proj.weight", nn.glorot(rng, in_dim, hp.hidden), "fc", dtype)
    store.add("proj.bias", np.zeros((1, hp.hidden)), "fc", dtype)
    blocks = []
    depth = 0
    for bp in plan.blocks:
        layers = {}
        for gene in bp.dag.layers:
            depth += 1
            layers[gene.index] = init_layer(store, f"b{bp.position}.l{gene.index}", gene.layer_type,
                                            gene.activation, depth, hp.hidden, rng, dtype)
        blocks.append(BlockInstance(bp.position, bp.dag, layers, bp.dropout, bp.alpha, bp.residual_source))
    store.add("cls.weight", nn.glorot(rng, hp.hidden, num_classes), "fc", dtype)
    store.add("cls.bias", np.zeros((1, num_classes)), "fc", dtype)
    return ModelGraph(arch, pool, plan, in_dim, num_classes, hp, store, blocks)


def block_forward(block: BlockInstance, direct_in: Tensor, residual_in: Tensor, h0: Tensor,
                  adj: NormAdj, hp: HyperParams, alpha: float | None = None) -> Tensor:
    """Run layers in index order and add the outputs of layers without a successor."""
    a = block.alpha if alpha is None else alpha
    values: dict[int, Tensor] = {-1: direct_in, 0: residual_in}
    for gene in block.dag.layers:
        if gene.prefix not in values:
            raise RuntimeError(f"wiring fault: layer {gene.index} reads missing source {gene.prefix}")
        lp: LayerParams = block.layers[gene.index]
        values[gene.index] = layer_forward(lp.kind, lp, values[gene.prefix], h0, adj, a, hp.beta(lp.depth))
    out = values[block.dag.sinks[0]]
    for s in block.dag.sinks[1:]:
        out = nn.add(out, values[s])
    return out


def embed(m: ModelGraph, features: Tensor, training: bool, rng: np.random.Generator | None) -> Tensor:
    p = m.params
    x = nn.dropout(features, m.hp.dropout, training, rng)
    return nn.relu(nn.add(nn.matmul(x, p["proj.weight"]), p["proj.bias"]))


def model_forward(m: ModelGraph, features, adj: NormAdj, training: bool = False,
                  rng: np.random.Generator | None = None) -> Tensor:
    """Class logits for every node."""
    if not isinstance(features, Tensor):
        features = Tensor(np.asarray(features, dtype=m.dtype))
    if features.shape[1] != m.in_dim:
        raise nn.ShapeError(f"model expects {m.in_dim} features, got {features.shape[1]}")
    h0 = embed(m, features, training, rng)
    outputs: dict[int, Tensor] = {0: h0}
    prev = h0
    for block in m.blocks:
        direct = nn.dropout(prev, block.dropout, training, rng)
        src = block.residual_source
        residual = direct if src is None else outputs[src]
        prev = block_forward(block, direct, residual, h0, adj, m.hp)
        outputs[block.position] = prev
    final = nn.dropout(prev, m.hp.dropout, training, rng)
    p = m.params
    return nn.add(nn.matmul(final, p["cls.weight"]), p["cls.bias"])


def accuracy(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> float:
    idx = np.flatnonzero(mask)
    if not len(idx):
        return 0.0
    return float(np.mean(np.argmax(logits[idx], axis=1) == labels[idx]))


def _streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    init_ss, drop_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(init_ss), np.random.default_rng(drop_ss)


def init_rng(seed: int) -> np.random.Generator:
    return _streams(seed)[0]


def train_model(m: ModelGraph, g: Graph, split: SplitMasks, adj: NormAdj, seed: int = 0,
                features: np.ndarray | None = None) -> EvaluationResult:
    """Full-batch training; accuracies are taken at the epoch of best validation accuracy.

    The parameters of that epoch are restored into ``m`` before returning.

    ``features`` overrides ``g.features`` (e.g. a row-normalized copy).
    """
    hp = m.hp
    _, drop_rng = _streams(seed)
    x = Tensor(np.asarray(g.features if features is None else features, dtype=m.dtype))
    labels = g.labels
    wd = {"conv": hp.weight_decay_conv, "fc": hp.weight_decay_fc}
    start = time.perf_counter()
    best_val, best_test, best_epoch = -1.0, 0.0, 0
    loss_value = float("nan")
    epochs_run = 0
    best_state = None
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, hp.epochs + 1):
            m.params.zero_grad()
            try:
                with nn.Tape() as tape:
                    logits = model_forward(m, x, adj, True, drop_rng)
                    loss = nn.masked_cross_entropy(logits, labels, split.train)
                loss_value = loss.item()
                if not np.isfinite(loss_value):
                    raise nn.NumericFault("non-finite training loss")
                tape.backward(loss, m.params)
                nn.adam_step(m.params, hp.lr, wd)
                epochs_run = epoch
                out = model_forward(m, x, adj, False).data
                if not np.isfinite(out).all():
                    raise nn.NumericFault("non-finite logits")
            except nn.NumericFault:
                return EvaluationResult(0.0, 0.0, loss_value, epochs_run,
                                        time.perf_counter() - start, best_epoch, failed=True)
            val = accuracy(out, labels, split.val)
            if val > best_val:
                best_val, best_epoch = val, epoch
                best_test = accuracy(out, labels, split.test)
                best_state = {name: t.data.copy() for name, t in m.params}
    if best_state is not None:
        for name, t in m.params:
            t.data[...] = best_state[name]
    if best_val < 0:
        out = model_forward(m, x, adj, False).data
        best_val, best_test = accuracy(out, labels, split.val), accuracy(out, labels, split.test)
    return EvaluationResult(best_val, best_test, loss_value, epochs_run,
                            time.perf_counter() - start, best_epoch)


def evaluate_model(m: ModelGraph, g: Graph, split: SplitMasks, adj: NormAdj,
                   features: np.ndarray | None = None) -> dict:
    x = np.asarray(g.features if features is None else features, dtype=m.dtype)
    out = model_forward(m, x, adj, False).data
    return {name: accuracy(out, g.labels, getattr(split, name)) for name in ("train", "val", "test")}


def with_hidden(hp: HyperParams, hidden: int) -> HyperParams:
    return replace(hp, hidden=hidden)
