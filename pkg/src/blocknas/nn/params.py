"""Named parameters with gradient and Adam moment slots."""
from __future__ import annotations

import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .tape import StateError, Tensor


@dataclass
class AdamConfig:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


class ParamStore:
    """Ordered mapping ``name -> Tensor`` plus weight-decay group and Adam state.

    Weight decay is the coupled L2 form: ``wd * p`` is added to the gradient
    before the moment updates.
    """

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self.groups: dict[str, str] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name: str, value, group: str = "default", dtype=np.float64) -> Tensor:
        if name in self.params:
            raise KeyError(f"duplicate parameter {name!r}")
        t = Tensor(np.array(value, dtype=dtype), requires_grad=True, name=name)
        self.params[name] = t
        self.groups[name] = group
        self.m[name] = np.zeros_like(t.data)
        self.v[name] = np.zeros_like(t.data)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __iter__(self):
        return iter(self.params.items())

    def __len__(self):
        return len(self.params)

    def names(self) -> list[str]:
        return list(self.params)

    def num_values(self) -> int:
        return sum(t.data.size for t in self.params.values())

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def fill_missing_grads(self) -> None:
        for t in self.params.values():
            if t.grad is None:
                t.grad = np.zeros_like(t.data)

    def copy_values_from(self, other: "ParamStore") -> None:
        if other.names() != self.names():
            raise StateError("parameter layouts differ")
        for name, t in self.params.items():
            np.copyto(t.data, other.params[name].data)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for name, t in self.params.items():
            out[f"param/{name}"] = t.data
            out[f"adam_m/{name}"] = self.m[name]
            out[f"adam_v/{name}"] = self.v[name]
        return out

    def load_state_arrays(self, arrays, step: int) -> None:
        for name, t in self.params.items():
            key = f"param/{name}"
            if key not in arrays:
                raise StateError(f"missing parameter {name!r}")
            if arrays[key].shape != t.data.shape:
                raise StateError(f"shape mismatch for {name!r}: {arrays[key].shape} vs {t.data.shape}")
            np.copyto(t.data, arrays[key])
            if f"adam_m/{name}" in arrays:
                np.copyto(self.m[name], arrays[f"adam_m/{name}"])
                np.copyto(self.v[name], arrays[f"adam_v/{name}"])
        self.step = int(step)


def adam_step(params: ParamStore, lr: float, weight_decay_by_group: dict[str, float] | None = None,
              config: AdamConfig = AdamConfig()) -> None:
    """One bias-corrected Adam update of every parameter in ``params``."""
    missing = [n for n, t in params if t.grad is None]
    if missing:
        raise StateError(f"no gradient for {missing[0]!r}; run backward first")
    decay = weight_decay_by_group or {}
    params.step += 1
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1 ** params.step
    c2 = 1.0 - b2 ** params.step
    for name, t in params:
        g = t.grad
        wd = decay.get(params.groups[name], 0.0)
        if wd:
            g = g + wd * t.data
        m, v = params.m[name], params.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        t.data -= (lr * (m / c1) / (np.sqrt(v / c2) + config.eps)).astype(t.data.dtype)


def save_checkpoint(path, params: ParamStore, meta: dict | None = None) -> None:
    """Write ``params`` to an ``.npz`` archive.

    Layout: one array per parameter under ``param/<name>`` (plus the Adam
    moments under ``adam_m/`` and ``adam_v/``) and a JSON string array
    ``__meta__`` holding ``{"step", "groups", "meta"}``.
    """
    header = {"step": params.step, "groups": params.groups, "meta": meta or {}}
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(header, sort_keys=True)), **params.state_arrays())
    tmp.replace(path)


def read_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    try:
        with np.load(path, allow_pickle=False) as z:
            header = json.loads(str(z["__meta__"]))
            arrays = {k: z[k].copy() for k in z.files if k != "__meta__"}
    except (OSError, ValueError, KeyError, EOFError, zipfile.BadZipFile) as exc:
        raise StateError(f"unreadable checkpoint {path}: {exc}") from None
    return arrays, header
