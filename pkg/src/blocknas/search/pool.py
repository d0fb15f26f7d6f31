"""The GNN block pool carried from block search to architecture search."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from blocknas.space import BlockCode, ParseError, serialize_code

POOL_FORMAT = "blocknas.gbp/1"


class PoolFileError(ValueError):
    pass


@dataclass(frozen=True)
class PoolEntry:
    code: BlockCode
    score: float
    provenance: dict = field(default_factory=dict, compare=False)


@dataclass
class BlockPool:
    """Top-N distinct block codes, sorted by descending score (earlier entries win ties)."""

    capacity: int = 3
    entries: list[PoolEntry] = field(default_factory=list)

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("pool capacity must be >= 1")

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def codes(self) -> list[BlockCode]:
        return [e.code for e in self.entries]

    @property
    def scores(self) -> list[float]:
        return [e.score for e in self.entries]

    @property
    def min_score(self) -> float | None:
        return self.entries[-1].score if self.entries else None

    def is_full(self) -> bool:
        return len(self.entries) >= self.capacity


def update_gbp(pool: BlockPool, code: BlockCode, score: float, provenance: dict | None = None) -> bool:
    """Offer ``code`` to the pool; returns whether the pool changed."""
    if not 0.0 <= score <= 1.0:
        raise ValueError(f"score {score} outside [0, 1]")
    entry = PoolEntry(code, float(score), dict(provenance or {}))
    for i, e in enumerate(pool.entries):
        if e.code == code:
            if score <= e.score:
                return False
            del pool.entries[i]
            break
    else:
        if pool.is_full() and score <= pool.min_score:
            return False
    # Insert after every entry with an equal or higher score.
    pos = len(pool.entries)
    for i, e in enumerate(pool.entries):
        if score > e.score:
            pos = i
            break
    pool.entries.insert(pos, entry)
    del pool.entries[pool.capacity:]
    return True


def pool_to_dict(pool: BlockPool, hidden: int, extra: dict | None = None) -> dict:
    doc = {
        "format": POOL_FORMAT,
        "capacity": pool.capacity,
        "hidden": hidden,
        "entries": [{"code": e.code.to_lists(), "score": e.score, "provenance": e.provenance}
                    for e in pool.entries],
    }
    if extra:
        doc.update(extra)
    return doc


def save_pool(path, pool: BlockPool, hidden: int, extra: dict | None = None) -> Path:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(pool_to_dict(pool, hidden, extra), indent=1, sort_keys=True) + "\n")
    tmp.replace(path)
    return path


def pool_from_dict(doc: dict) -> tuple[BlockPool, dict]:
    if not isinstance(doc, dict) or doc.get("format") != POOL_FORMAT:
        raise PoolFileError(f"not a block pool document (expected format {POOL_FORMAT!r})")
    try:
        pool = BlockPool(int(doc["capacity"]))
        for i, item in enumerate(doc["entries"]):
            code = BlockCode.from_lists(item["code"])
            pool.entries.append(PoolEntry(code, float(item["score"]), dict(item.get("provenance", {}))))
    except (KeyError, TypeError, ValueError) as exc:
        raise PoolFileError(f"malformed block pool: {exc}") from None
    if pool.scores != sorted(pool.scores, reverse=True):
        raise PoolFileError("block pool entries are not sorted by score")
    if len(pool.entries) > pool.capacity:
        raise PoolFileError("block pool holds more entries than its capacity")
    return pool, doc


def load_pool(path) -> tuple[BlockPool, dict]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise PoolFileError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise PoolFileError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return pool_from_dict(doc)


def describe(pool: BlockPool) -> list[str]:
    return [f"{e.score:.4f} {serialize_code(e.code)}" for e in pool.entries]
