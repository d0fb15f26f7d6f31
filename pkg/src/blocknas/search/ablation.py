"""Structural-diversity ablation: searched block versus a single-type chain at equal depth."""
from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass

from blocknas.gnn import HyperParams, build_model, init_rng, train_model
from blocknas.search.evaluators import Dataset
from blocknas.space import (
    LAYER_TYPES,
    ArchCode,
    BlockCode,
    BlockGene,
    SpaceConfig,
    chain_block,
    eob_block,
    ensure_valid_block,
)

COLUMNS = ("depth", "variant", "accuracy", "seed")


@dataclass(frozen=True)
class AblationRow:
    depth: int
    variant: str
    accuracy: float
    seed: int


def truncate_block(block: BlockCode, layers: int) -> BlockCode:
    """The first ``layers`` layers of ``block`` (prefixes only point backwards, so this stays valid)."""
    if not 1 <= layers <= block.depth:
        raise ValueError(f"cannot keep {layers} of {block.depth} layers")
    kept = [g.to_list() for g in block.layers[:layers]]
    return BlockCode.from_lists(kept + [[layers + 1, "EoB", None, None]])


def dominant_type(block: BlockCode) -> str:
    counts = Counter(g.layer_type for g in block.layers)
    best = max(counts.values())
    return next(t for t in LAYER_TYPES if counts.get(t) == best)


def stacked(block: BlockCode, depth: int, dropout: float, alpha: float) -> tuple[ArchCode, list[BlockCode]]:
    """Standard scaffold with enough copies of ``block`` for ``depth`` layers; the last copy is truncated."""
    L = block.depth
    n = math.ceil(depth / L)
    rest = depth - (n - 1) * L
    pool = [block] if rest == L else [block, truncate_block(block, rest)]
    genes = [BlockGene(i, 0 if (i < n or rest == L) else 1, dropout, alpha, i - 2 if i >= 3 else -1)
             for i in range(1, n + 1)]
    return ArchCode(tuple(genes) + (eob_block(n + 1),)), pool


def chain_variant(block: BlockCode) -> BlockCode:
    """Same depth as ``block``, every layer the block's most frequent type, ReLU, wired in sequence."""
    return chain_block([dominant_type(block)] * block.depth, "ReLU")


def diversity_ablation(block: BlockCode, depths: list[int], data: Dataset, hp: HyperParams,
                       seed: int = 0, space: SpaceConfig = SpaceConfig()) -> list[AblationRow]:
    """Train the searched block and its single-type chain counterpart at each depth."""
    ensure_valid_block(block, SpaceConfig(max_layers=max(space.max_layers, block.depth)))
    if not depths or any(d < 1 for d in depths):
        raise ValueError("depths must be positive integers")
    rows = []
    chain = chain_variant(block)
    for depth in depths:
        for variant, base in (("blocked", block), ("chain", chain)):
            arch, pool = stacked(base, depth, hp.dropout, hp.alpha)
            m = build_model(arch, pool, data.in_dim, data.num_classes, hp, init_rng(seed))
            r = train_model(m, data.graph, data.split, data.adj, seed, data.features)
            rows.append(AblationRow(depth, variant, r.test_accuracy, seed))
    return rows


def ablation_csv(rows: list[AblationRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow([r.depth, r.variant, repr(r.accuracy), r.seed])
    return buf.getvalue()
