"""Action enumeration, decoding and counting for both code spaces."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from blocknas.space.codes import (
    EOB,
    ArchCode,
    BlockCode,
    BlockGene,
    CodeError,
    LayerGene,
    SpaceConfig,
    eob_block,
    eob_layer,
    ensure_valid_arch,
    ensure_valid_block,
)


class StateError(RuntimeError):
    """Action query on a terminated or impossible partial code."""


class DecodeError(CodeError):
    pass


# --- valid actions --------------------------------------------------------

def _check_partial(partial: Sequence) -> int:
    for pos, g in enumerate(partial, 1):
        if g.is_eob:
            raise StateError("partial code is already terminated by EoB")
        if g.index != pos:
            raise StateError(f"partial gene {pos} has index {g.index}")
    return len(partial)


def valid_actions_block(partial: Sequence[LayerGene], cfg: SpaceConfig = SpaceConfig()) -> list[LayerGene]:
    """Genes that may extend ``partial``, in action-table order (EoB last)."""
    n = _check_partial(partial)
    if n > cfg.max_layers:
        raise StateError(f"partial has {n} layers, more than {cfg.max_layers}")
    idx = n + 1
    out: list[LayerGene] = []
    if n < cfg.max_layers:
        for kind in cfg.layer_types:
            for act in cfg.activations:
                for prefix in range(-1, idx):
                    out.append(LayerGene(idx, kind, act, prefix))
    if n >= 1:
        out.append(eob_layer(idx))
    return out


def valid_actions_arch(partial: Sequence[BlockGene], pool_size: int,
                       cfg: SpaceConfig = SpaceConfig()) -> list[BlockGene]:
    if pool_size < 1:
        raise StateError("the block pool is empty")
    n = _check_partial(partial)
    if n > cfg.max_blocks:
        raise StateError(f"partial has {n} blocks, more than {cfg.max_blocks}")
    idx = n + 1
    out: list[BlockGene] = []
    if n < cfg.max_blocks:
        for block in range(pool_size):
            for drop in cfg.dropouts:
                for alpha in cfg.alphas:
                    for prefix in range(-1, idx):
                        out.append(BlockGene(idx, block, drop, alpha, prefix))
    if n >= 1:
        out.append(eob_block(idx))
    return out


# --- decoding -------------------------------------------------------------

DIRECT = -1
RESIDUAL = 0


@dataclass(frozen=True)
class BlockDAG:
    """Decoded block: layers in index order, their input sources and the EoB sinks."""

    layers: tuple[LayerGene, ...]
    successors: dict
    sinks: tuple[int, ...]

    @property
    def depth(self) -> int:
        return len(self.layers)

    def edges(self) -> list[tuple[int, int]]:
        """(source, target) pairs; sources -1 and 0 are the two block inputs."""
        return [(g.prefix, g.index) for g in self.layers]


def decode_block(code: BlockCode, cfg: SpaceConfig = SpaceConfig()) -> BlockDAG:
    try:
        ensure_valid_block(code, cfg)
    except CodeError as exc:
        raise DecodeError(str(exc)) from None
    layers = code.layers
    succ: dict[int, list[int]] = {g.index: [] for g in layers}
    for g in layers:
        if g.prefix >= 1:
            succ[g.prefix].append(g.index)
    sinks = tuple(i for i, s in succ.items() if not s)
    return BlockDAG(layers, {k: tuple(v) for k, v in succ.items()}, sinks)


@dataclass(frozen=True)
class BlockPlan:
    """One block of a decoded architecture.

    ``residual_source`` names the block whose output feeds the residual
    input: ``0`` is h0, ``k`` block ``k``, and ``None`` means the residual
    input is bound to the direct input.
    """

    position: int
    pool_id: int
    dag: BlockDAG
    dropout: float
    alpha: float
    residual_source: int | None


@dataclass(frozen=True)
class ArchPlan:
    blocks: tuple[BlockPlan, ...]

    @property
    def depth(self) -> int:
        """Total number of GNN layers."""
        return sum(b.dag.depth for b in self.blocks)

    def residual_edges(self) -> list[tuple[int, int]]:
        """(source block, target block) macro residual edges; source 0 is h0."""
        return [(b.residual_source, b.position) for b in self.blocks if b.residual_source is not None]


def _residual_source(position: int, prefix: int) -> int | None:
    if prefix == -1:
        return None
    if prefix == 0:
        return 0 if position == 1 else 1
    return prefix


def decode_arch(code: ArchCode, pool: Sequence[BlockCode], cfg: SpaceConfig = SpaceConfig()) -> ArchPlan:
    """Resolve block ids against ``pool`` and the macro residual wiring."""
    try:
        ensure_valid_arch(code, len(pool), cfg)
    except CodeError as exc:
        raise DecodeError(str(exc)) from None
    dags = {}
    plans = []
    for g in code.blocks:
        if g.block_type not in dags:
            dags[g.block_type] = decode_block(pool[g.block_type], cfg)
        plans.append(BlockPlan(g.index, g.block_type, dags[g.block_type], float(g.dropout),
                               float(g.alpha), _residual_source(g.index, g.prefix)))
    return ArchPlan(tuple(plans))


def standard_architecture(cfg: SpaceConfig = SpaceConfig(), dropout: float = 0.3,
                          alpha: float = 0.3, num_blocks: int | None = None) -> ArchCode:
    """Standard scaffold: block ``i >= 3`` takes its residual from block ``i - 2``.

    Every gene refers to pool entry 0, so decode it against a one-block pool.
    """
    n = cfg.max_blocks if num_blocks is None else num_blocks
    if n < 1:
        raise ValueError("num_blocks must be >= 1")
    genes = [BlockGene(i, 0, dropout, alpha, i - 2 if i >= 3 else -1) for i in range(1, n + 1)]
    genes.append(eob_block(n + 1))
    return ArchCode(tuple(genes))


def standard_plan(block: BlockCode, cfg: SpaceConfig = SpaceConfig(), dropout: float = 0.3,
                  alpha: float = 0.3, num_blocks: int | None = None) -> ArchPlan:
    arch = standard_architecture(cfg, dropout, alpha, num_blocks)
    big = SpaceConfig(cfg.max_layers, max(cfg.max_blocks, len(arch.blocks)), cfg.layer_types,
                      cfg.activations, cfg.dropouts, cfg.alphas)
    return decode_arch(arch, [block], big)


# --- counting -------------------------------------------------------------

def count_blocks(cfg: SpaceConfig = SpaceConfig()) -> int:
    """Number of valid block codes: sum over lengths of per-position option products."""
    per_layer = len(cfg.layer_types) * len(cfg.activations)
    total = 0
    for length in range(1, cfg.max_layers + 1):
        total += math.prod(per_layer * (i + 1) for i in range(1, length + 1))
    return total


def count_archs(pool_size: int, cfg: SpaceConfig = SpaceConfig()) -> int:
    per_block = pool_size * len(cfg.dropouts) * len(cfg.alphas)
    return sum(math.prod(per_block * (i + 1) for i in range(1, n + 1))
               for n in range(1, cfg.max_blocks + 1))


PAPER_BLOCK_COUNT = 2.047e18


def count_report(cfg: SpaceConfig = SpaceConfig()) -> dict:
    exact = count_blocks(cfg)
    return {"max_layers": cfg.max_layers, "count": exact, "reported": PAPER_BLOCK_COUNT,
            "ratio": PAPER_BLOCK_COUNT / exact}


def is_terminal(partial: Sequence) -> bool:
    return bool(partial) and partial[-1].is_eob


__all__ = [
    "EOB", "StateError", "DecodeError", "valid_actions_block", "valid_actions_arch",
    "BlockDAG", "BlockPlan", "ArchPlan", "decode_block", "decode_arch",
    "standard_architecture", "standard_plan", "count_blocks", "count_archs", "count_report",
    "is_terminal", "DIRECT", "RESIDUAL",
]
