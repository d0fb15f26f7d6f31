"""Gene and code types for the block and architecture stages.

A block code is a list of 4-D layer genes ``[index, layer_type, activation,
prefix]``; an architecture code a list of 5-D block genes ``[index,
block_type, dropout, alpha, prefix]``.  Both end with exactly one ``EoB``
gene whose remaining fields are ``None`` (``null`` in JSON).

Layer prefixes: ``-1`` is the block's direct input, ``0`` its macro residual
input, ``k >= 1`` the output of layer ``k``.  Block prefixes: ``-1`` means no
macro residual input, ``0`` the first block's output, ``k >= 1`` the output
of block ``k``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Union

EOB = "EoB"
LAYER_TYPES = ("GCNII", "GATII", "SAGEII-Mean", "SAGEII-Max", "AGNNII")
ACTIVATIONS = ("ReLU", "ELU", "PReLU", "Tanh", "Identity", "none")
DROPOUTS = (0.3, 0.45, 0.6)
ALPHAS = (0.1, 0.3, 0.5)


class CodeError(ValueError):
    """Invalid gene, code, or code text."""


class ParseError(CodeError):
    def __init__(self, message: str, location: str = ""):
        super().__init__(f"{location}: {message}" if location else message)
        self.location = location


@dataclass(frozen=True)
class SpaceConfig:
    max_layers: int = 6
    max_blocks: int = 8
    layer_types: tuple[str, ...] = LAYER_TYPES
    activations: tuple[str, ...] = ACTIVATIONS
    dropouts: tuple[float, ...] = DROPOUTS
    alphas: tuple[float, ...] = ALPHAS

    def __post_init__(self):
        if self.max_layers < 1 or self.max_blocks < 1:
            raise ValueError("max_layers and max_blocks must be >= 1")
        if EOB in self.layer_types:
            raise ValueError("EoB is implicit; list only real layer types")


@dataclass(frozen=True, order=True)
class LayerGene:
    index: int
    layer_type: str
    activation: str | None = None
    prefix: int | None = None

    @property
    def is_eob(self) -> bool:
        return self.layer_type == EOB

    def to_list(self) -> list:
        return [self.index, self.layer_type, self.activation, self.prefix]


@dataclass(frozen=True)
class BlockGene:
    index: int
    block_type: Union[int, str]
    dropout: float | None = None
    alpha: float | None = None
    prefix: int | None = None

    @property
    def is_eob(self) -> bool:
        return self.block_type == EOB

    def to_list(self) -> list:
        return [self.index, self.block_type, self.dropout, self.alpha, self.prefix]


def eob_layer(index: int) -> LayerGene:
    return LayerGene(index, EOB, None, None)


def eob_block(index: int) -> BlockGene:
    return BlockGene(index, EOB, None, None, None)


@dataclass(frozen=True)
class BlockCode:
    genes: tuple[LayerGene, ...]

    def __post_init__(self):
        object.__setattr__(self, "genes", tuple(self.genes))

    def __len__(self):
        return len(self.genes)

    def __iter__(self):
        return iter(self.genes)

    @property
    def layers(self) -> tuple[LayerGene, ...]:
        """Genes other than EoB."""
        return tuple(g for g in self.genes if not g.is_eob)

    @property
    def depth(self) -> int:
        return len(self.layers)

    def to_lists(self) -> list[list]:
        return [g.to_list() for g in self.genes]

    @classmethod
    def from_lists(cls, rows) -> "BlockCode":
        return cls(tuple(_layer_gene(r, f"gene {i + 1}") for i, r in enumerate(rows)))

    def __str__(self):
        return serialize_code(self)


@dataclass(frozen=True)
class ArchCode:
    genes: tuple[BlockGene, ...]

    def __post_init__(self):
        object.__setattr__(self, "genes", tuple(self.genes))

    def __len__(self):
        return len(self.genes)

    def __iter__(self):
        return iter(self.genes)

    @property
    def blocks(self) -> tuple[BlockGene, ...]:
        return tuple(g for g in self.genes if not g.is_eob)

    def to_lists(self) -> list[list]:
        return [g.to_list() for g in self.genes]

    @classmethod
    def from_lists(cls, rows) -> "ArchCode":
        return cls(tuple(_block_gene(r, f"gene {i + 1}") for i, r in enumerate(rows)))

    def __str__(self):
        return serialize_code(self)


Code = Union[BlockCode, ArchCode]


# --- validation -----------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    gene: int
    rule: str
    detail: str = ""

    def __str__(self):
        return f"gene {self.gene}: {self.rule}" + (f" ({self.detail})" if self.detail else "")


def _structure_violations(genes, limit: int, what: str) -> list[Violation]:
    out = []
    if not genes:
        return [Violation(0, "empty", "code has no genes")]
    for pos, g in enumerate(genes, 1):
        if g.index != pos:
            out.append(Violation(pos, "consecutive-index", f"index {g.index}, expected {pos}"))
    if not genes[-1].is_eob:
        out.append(Violation(len(genes), "unterminated", "last gene must be EoB"))
    for pos, g in enumerate(genes[:-1], 1):
        if g.is_eob:
            out.append(Violation(pos, "eob-not-last"))
    real = [g for g in genes if not g.is_eob]
    if not real:
        out.append(Violation(1, "empty", f"a code needs at least one {what}"))
    if len(real) > limit:
        out.append(Violation(len(genes), "too-long", f"{len(real)} {what}s > {limit}"))
    return out


def _prefix_violations(g, pos: int) -> list[Violation]:
    if not isinstance(g.prefix, int) or isinstance(g.prefix, bool):
        return [Violation(pos, "prefix-type", repr(g.prefix))]
    if g.prefix < -1:
        return [Violation(pos, "prefix-range", f"prefix {g.prefix} < -1")]
    if g.prefix >= g.index:
        return [Violation(pos, "prefix<index", f"prefix {g.prefix} >= index {g.index}")]
    return []


def validate_block(code: BlockCode, cfg: SpaceConfig = SpaceConfig()) -> list[Violation]:
    """All rule violations of ``code``; an empty list means valid."""
    genes = code.genes
    out = _structure_violations(genes, cfg.max_layers, "layer")
    for pos, g in enumerate(genes, 1):
        if g.is_eob:
            if g.activation is not None or g.prefix is not None:
                out.append(Violation(pos, "eob-sentinel", "EoB carries no activation or prefix"))
            continue
        if g.layer_type not in cfg.layer_types:
            out.append(Violation(pos, "layer-type", repr(g.layer_type)))
        if g.activation not in cfg.activations:
            out.append(Violation(pos, "activation", repr(g.activation)))
        out.extend(_prefix_violations(g, pos))
    return out


def validate_arch(code: ArchCode, pool_size: int, cfg: SpaceConfig = SpaceConfig()) -> list[Violation]:
    genes = code.genes
    out = _structure_violations(genes, cfg.max_blocks, "block")
    for pos, g in enumerate(genes, 1):
        if g.is_eob:
            if (g.dropout, g.alpha, g.prefix) != (None, None, None):
                out.append(Violation(pos, "eob-sentinel", "EoB carries no dropout, alpha or prefix"))
            continue
        if not isinstance(g.block_type, int) or not 0 <= g.block_type < pool_size:
            out.append(Violation(pos, "block-type", f"{g.block_type!r} not in pool of {pool_size}"))
        if g.dropout not in cfg.dropouts:
            out.append(Violation(pos, "dropout", repr(g.dropout)))
        if g.alpha not in cfg.alphas:
            out.append(Violation(pos, "alpha", repr(g.alpha)))
        out.extend(_prefix_violations(g, pos))
    return out


def ensure_valid_block(code: BlockCode, cfg: SpaceConfig = SpaceConfig()) -> BlockCode:
    bad = validate_block(code, cfg)
    if bad:
        raise CodeError("invalid block code: " + "; ".join(map(str, bad)))
    return code


def ensure_valid_arch(code: ArchCode, pool_size: int, cfg: SpaceConfig = SpaceConfig()) -> ArchCode:
    bad = validate_arch(code, pool_size, cfg)
    if bad:
        raise CodeError("invalid architecture code: " + "; ".join(map(str, bad)))
    return code


# --- text form ------------------------------------------------------------

_LAYER_LOOKUP = {name.lower(): name for name in LAYER_TYPES + (EOB,)}
_ACT_LOOKUP = {name.lower(): name for name in ACTIVATIONS}


def _int(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ParseError(f"expected an integer, got {value!r}", where)
    return value


def _layer_gene(row, where: str) -> LayerGene:
    if not isinstance(row, (list, tuple)) or len(row) != 4:
        raise ParseError("layer gene must be [index, layer_type, activation, prefix]", where)
    index = _int(row[0], where)
    if not isinstance(row[1], str) or row[1].lower() not in _LAYER_LOOKUP:
        raise ParseError(f"unknown layer type {row[1]!r}", where)
    kind = _LAYER_LOOKUP[row[1].lower()]
    if kind == EOB:
        return LayerGene(index, EOB, None if row[2] is None else row[2],
                         None if row[3] is None else row[3])
    if not isinstance(row[2], str) or row[2].lower() not in _ACT_LOOKUP:
        raise ParseError(f"unknown activation {row[2]!r}", where)
    return LayerGene(index, kind, _ACT_LOOKUP[row[2].lower()], _int(row[3], where))


def _block_gene(row, where: str) -> BlockGene:
    if not isinstance(row, (list, tuple)) or len(row) != 5:
        raise ParseError("block gene must be [index, block_type, dropout, alpha, prefix]", where)
    index = _int(row[0], where)
    if isinstance(row[1], str):
        if row[1].lower() != EOB.lower():
            raise ParseError(f"unknown block type {row[1]!r}", where)
        return BlockGene(index, EOB, row[2], row[3], row[4])
    block = _int(row[1], where)
    for v in (row[2], row[3]):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ParseError(f"expected a number, got {v!r}", where)
    return BlockGene(index, block, float(row[2]), float(row[3]), _int(row[4], where))


def serialize_code(code: Code) -> str:
    """Compact single-line JSON nested arrays, e.g. ``[[1,"GCNII","ReLU",-1],[2,"EoB",null,null]]``."""
    return json.dumps(code.to_lists(), separators=(",", ":"))


def parse_code(text: str, stage: str | None = None) -> Code:
    """Inverse of :func:`serialize_code`; also accepts the wrapped code-file object.

    The stage is inferred from the gene width (4 = block, 5 = architecture)
    unless given.
    """
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, f"line {exc.lineno} column {exc.colno}") from None
    if isinstance(obj, dict):
        stage = stage or obj.get("stage")
        if "code" not in obj:
            raise ParseError("code file has no 'code' field", "top level")
        obj = obj["code"]
    if not isinstance(obj, list) or not obj:
        raise ParseError("a code is a non-empty list of genes", "top level")
    if stage is None:
        first = obj[0]
        width = len(first) if isinstance(first, list) else None
        stage = {4: "block", 5: "arch"}.get(width)
        if stage is None:
            raise ParseError("cannot tell block from architecture code", "gene 1")
    if stage == "block":
        return BlockCode.from_lists(obj)
    if stage == "arch":
        return ArchCode.from_lists(obj)
    raise ParseError(f"unknown stage {stage!r}", "top level")


def code_stage(code: Code) -> str:
    return "block" if isinstance(code, BlockCode) else "arch"


def code_file_text(code: Code, **extra) -> str:
    doc = {"format": "blocknas.code/1", "stage": code_stage(code), "code": code.to_lists()}
    doc.update(extra)
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def block_code(rows: Iterable) -> BlockCode:
    """Build a block code from list rows, appending EoB if missing."""
    genes = [_layer_gene(list(r), f"gene {i + 1}") for i, r in enumerate(rows)]
    if not genes or not genes[-1].is_eob:
        genes.append(eob_layer(len(genes) + 1))
    return BlockCode(tuple(genes))


def chain_block(kinds: Iterable[str], activation: str = "ReLU") -> BlockCode:
    """Layers wired one after another (first layer reads the direct input)."""
    return block_code([[i, k, activation, i - 1 if i > 1 else -1] for i, k in enumerate(kinds, 1)])
