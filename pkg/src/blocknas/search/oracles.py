"""Closed-form rewards over codes, for exercising the search without training.

Three families share one vocabulary of target genes:

* ``smooth``: share of positions carrying the preferred gene, so partial
  progress pays off everywhere.
* ``sparse``: 1 for one exact motif, 0 for anything else.
* ``deceptive``: a cheap local attractor (stacking the attractor type, at
  most 0.6) competes with a motif whose first gene alone scores below the
  attractor but whose completion scores 1.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from blocknas.space import ArchCode, BlockCode, SpaceConfig

FAMILIES = ("smooth", "deceptive", "sparse")


def _fields(gene) -> tuple:
    return tuple(gene.to_list()[1:])


def _match(a: tuple, b: tuple) -> float:
    return sum(x == y for x, y in zip(a, b)) / len(b)


@dataclass(frozen=True)
class OracleSpec:
    """Target genes for one stage.

    ``head`` is the motif's first gene, ``follow(k)`` its gene at position
    ``k >= 2``, ``preferred(k)`` the smooth family's gene at ``k`` and
    ``attractor`` the first-field value rewarded by the deceptive local optimum.
    """

    stage: str
    max_len: int
    head: tuple
    follow: Callable[[int], tuple]
    preferred: Callable[[int], tuple]
    attractor: object

    @property
    def motif_len(self) -> int:
        return min(4, self.max_len)

    def motif(self) -> list[tuple]:
        return [self.head] + [self.follow(k) for k in range(2, self.motif_len + 1)]


def block_oracle_spec(cfg: SpaceConfig = SpaceConfig()) -> OracleSpec:
    return OracleSpec(
        stage="block",
        max_len=cfg.max_layers,
        head=("AGNNII", "Tanh", -1),
        follow=lambda k: ("GCNII", "ReLU", k - 1),
        preferred=lambda k: ("GCNII", "ReLU", k - 1 if k > 1 else -1),
        attractor="GCNII",
    )


def arch_oracle_spec(pool_size: int, cfg: SpaceConfig = SpaceConfig()) -> OracleSpec:
    last = pool_size - 1
    return OracleSpec(
        stage="arch",
        max_len=cfg.max_blocks,
        head=(last, cfg.dropouts[-1], cfg.alphas[0], 0),
        follow=lambda k: (0, cfg.dropouts[0], cfg.alphas[1], k - 1),
        preferred=lambda k: (0, cfg.dropouts[0], cfg.alphas[1], k - 2 if k >= 3 else -1),
        attractor=0,
    )


def smooth_reward(genes: list[tuple], spec: OracleSpec) -> float:
    hits = sum(g == spec.preferred(k) for k, g in enumerate(genes, 1))
    return hits / spec.max_len


def sparse_reward(genes: list[tuple], spec: OracleSpec) -> float:
    return 1.0 if genes == spec.motif() else 0.0


def deceptive_reward(genes: list[tuple], spec: OracleSpec) -> float:
    L, Ls = len(genes), spec.motif_len
    if genes[0] == spec.head:
        if Ls == 1:
            return 1.0
        score = sum(_match(genes[k - 1], spec.follow(k)) for k in range(2, min(L, Ls) + 1))
        return max(0.0, 0.55 + 0.45 * score / (Ls - 1) - 0.05 * max(0, L - Ls))
    share = sum(g[0] == spec.attractor for g in genes) / L
    return 0.35 + 0.25 * share


def oracle_reward(code, family: str, spec: OracleSpec) -> float:
    """Reward in [0, 1] for a valid block or architecture code."""
    genes = [_fields(g) for g in code.genes if not g.is_eob]
    if not genes:
        raise ValueError("code has no genes")
    if family == "smooth":
        return smooth_reward(genes, spec)
    if family == "sparse":
        return sparse_reward(genes, spec)
    if family == "deceptive":
        return deceptive_reward(genes, spec)
    raise ValueError(f"unknown oracle family {family!r}; choose from {FAMILIES}")


def motif_code(spec: OracleSpec, family: str = "sparse"):
    """The code the given family scores 1.0."""
    rows = spec.motif() if family != "smooth" else [spec.preferred(k) for k in range(1, spec.max_len + 1)]
    genes = [[i, *r] for i, r in enumerate(rows, 1)]
    if spec.stage == "block":
        genes.append([len(genes) + 1, "EoB", None, None])
        return BlockCode.from_lists(genes)
    genes.append([len(genes) + 1, "EoB", None, None, None])
    return ArchCode.from_lists(genes)
