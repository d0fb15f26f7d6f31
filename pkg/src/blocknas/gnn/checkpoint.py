"""Trained-model checkpoints: parameter archive plus a metadata sidecar."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from blocknas import nn
from blocknas.gnn.model import EvaluationResult, HyperParams, ModelGraph, build_model
from blocknas.space import ArchCode, BlockCode


class CheckpointError(ValueError):
    """Missing, corrupt or incompatible checkpoint."""


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".json")


def save_model(path, m: ModelGraph, seed: int, result: EvaluationResult | None = None,
               extra: dict | None = None) -> Path:
    """Write ``<path>`` (npz) and ``<stem>.json`` describing how to rebuild the model."""
    path = Path(path)
    meta = {
        "arch": m.arch.to_lists(),
        "pool": [b.to_lists() for b in m.pool],
        "in_dim": m.in_dim,
        "num_classes": m.num_classes,
        "hyperparams": m.hp.to_dict(),
        "seed": seed,
        "depth": m.depth,
        "result": result.to_dict() if result else None,
    }
    if extra:
        meta.update(extra)
    nn.save_checkpoint(path, m.params, meta)
    side = sidecar_path(path)
    tmp = side.with_name(side.name + ".tmp")
    tmp.write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    tmp.replace(side)
    return side


def load_model(path) -> tuple[ModelGraph, dict]:
    try:
        arrays, header = nn.read_checkpoint(path)
    except nn.StateError as exc:
        raise CheckpointError(str(exc)) from None
    meta = header.get("meta", {})
    try:
        arch = ArchCode.from_lists(meta["arch"])
        pool = [BlockCode.from_lists(b) for b in meta["pool"]]
        hp = HyperParams.from_dict(meta["hyperparams"])
        m = build_model(arch, pool, int(meta["in_dim"]), int(meta["num_classes"]), hp,
                        np.random.default_rng(0))
        m.params.load_state_arrays(arrays, int(header.get("step", 0)))
    except (KeyError, TypeError, ValueError, nn.StateError) as exc:
        raise CheckpointError(f"checkpoint {path} does not describe a model: {exc}") from None
    return m, meta
