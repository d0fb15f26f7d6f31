"""Run configuration files (JSON, schema version 1).

Every section is optional and falls back to the defaults below; unknown keys
are rejected so typos surface before any expensive work starts.

    {
      "version": 1,
      "seed": 0,
      "dataset": {"path": "data/cora", "split": "semi", "subsample": null, ...},
      "space": {"max_layers": 6, "max_blocks": 8},
      "model": {"alpha": 0.3, "lam": 0.5, "dropout": 0.3, "hidden": 32, "epochs": 400, ...},
      "agent": {"block_episodes": 1500, "arch_episodes": 1000, "capacity": 300, ...},
      "evaluator": {"kind": "real"},
      "output_dir": "runs/cora",
      "jobs": 1,
      "checkpoint_every": 10
    }
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from blocknas.agent import AgentConfig
from blocknas.gnn import HyperParams
from blocknas.search.evaluators import DataSpec
from blocknas.search.oracles import FAMILIES
from blocknas.space import SpaceConfig

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.field_path = path


@dataclass(frozen=True)
class SearchBudget:
    block_episodes: int = 1500
    arch_episodes: int = 1000
    pool_size: int = 3


@dataclass(frozen=True)
class EvaluatorSpec:
    kind: str = "real"
    family: str = "deceptive"


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    dataset: DataSpec | None = None
    space: SpaceConfig = SpaceConfig()
    model: HyperParams = HyperParams()
    agent: AgentConfig = AgentConfig()
    budget: SearchBudget = SearchBudget()
    evaluator: EvaluatorSpec = EvaluatorSpec()
    output_dir: str = "runs/latest"
    jobs: int = 1
    checkpoint_every: int = 10
    source: str = field(default="", compare=False)

    def snapshot(self) -> dict:
        """JSON-ready form that :func:`config_from_dict` reads back."""
        agent = dataclasses.asdict(self.agent)
        agent.update(dataclasses.asdict(self.budget))
        space = {"max_layers": self.space.max_layers, "max_blocks": self.space.max_blocks}
        return {
            "version": SCHEMA_VERSION,
            "seed": self.seed,
            "dataset": None if self.dataset is None else dataclasses.asdict(self.dataset),
            "space": space,
            "model": self.model.to_dict(),
            "agent": agent,
            "evaluator": dataclasses.asdict(self.evaluator),
            "output_dir": self.output_dir,
            "jobs": self.jobs,
            "checkpoint_every": self.checkpoint_every,
        }


_TOP = {"version", "seed", "dataset", "space", "model", "agent", "evaluator", "output_dir", "jobs",
        "checkpoint_every"}


def _section(obj, path: str) -> dict:
    if obj is None:
        return {}
    if not isinstance(obj, dict):
        raise ConfigError(path, "must be an object")
    return obj


def _build(cls, values: dict, path: str, allowed: set[str] | None = None, types: dict | None = None):
    names = {f.name: f for f in dataclasses.fields(cls)}
    allowed = set(names) if allowed is None else allowed
    for key in values:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}", "unknown field")
    hints = types or {}
    kwargs = {}
    for key, value in values.items():
        want = hints.get(key)
        if want is not None and value is not None:
            ok = isinstance(value, want) and not (isinstance(value, bool) and want in (int, float, (int, float)))
            if not ok:
                raise ConfigError(f"{path}.{key}", f"expected {getattr(want, '__name__', 'number')}, got {value!r}")
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        msg = str(exc)
        culprit = next((k for k in kwargs if k in msg), None)
        raise ConfigError(f"{path}.{culprit}" if culprit else path, msg) from None


_NUM = (int, float)
_DATA_TYPES = {"path": str, "format": str, "subsample": int, "split": str, "per_class": int, "n_val": int,
               "n_test": int, "train_frac": _NUM, "val_frac": _NUM, "seed": int, "normalize_features": bool}
_MODEL_TYPES = {"alpha": _NUM, "lam": _NUM, "dropout": _NUM, "hidden": int, "lr": _NUM, "epochs": int,
                "weight_decay_conv": _NUM, "weight_decay_fc": _NUM, "fixed_beta": _NUM, "dtype": str}
_AGENT_TYPES = {"hidden": int, "lr": _NUM, "gamma": _NUM, "batch_size": int, "capacity": int,
                "sync_period": int, "anneal_start": _NUM, "updates_per_episode": int, "block_episodes": int,
                "arch_episodes": int, "pool_size": int}


def _int_field(doc: dict, key: str, default: int, minimum: int) -> int:
    value = doc.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(key, f"expected an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(key, f"must be >= {minimum}")
    return value


def config_from_dict(doc: dict, base_dir: Path | None = None, check_paths: bool = True,
                     source: str = "") -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("", "configuration must be a JSON object")
    for key in doc:
        if key not in _TOP:
            raise ConfigError(key, "unknown field")
    version = doc.get("version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError("version", f"unsupported schema version {version!r} (expected {SCHEMA_VERSION})")
    seed = _int_field(doc, "seed", 0, 0)
    jobs = _int_field(doc, "jobs", 1, 1)
    every = _int_field(doc, "checkpoint_every", 10, 1)

    ev = _build(EvaluatorSpec, _section(doc.get("evaluator"), "evaluator"), "evaluator",
                types={"kind": str, "family": str})
    if ev.kind not in ("real", "synthetic"):
        raise ConfigError("evaluator.kind", f"must be 'real' or 'synthetic', got {ev.kind!r}")
    if ev.family not in FAMILIES:
        raise ConfigError("evaluator.family", f"must be one of {', '.join(FAMILIES)}")

    dataset = None
    raw_data = doc.get("dataset")
    if raw_data is not None:
        data_doc = dict(_section(raw_data, "dataset"))
        if "path" not in data_doc:
            raise ConfigError("dataset.path", "required")
        dataset = _build(DataSpec, data_doc, "dataset", types=_DATA_TYPES)
        p = Path(dataset.path)
        if not p.is_absolute() and base_dir is not None and not p.exists():
            candidate = base_dir / p
            if candidate.exists():
                dataset = dataclasses.replace(dataset, path=str(candidate))
        if check_paths and not Path(dataset.path).exists():
            raise ConfigError("dataset.path", f"{dataset.path} does not exist")
    elif ev.kind == "real":
        raise ConfigError("dataset", "required when evaluator.kind is 'real'")

    space_doc = _section(doc.get("space"), "space")
    space = _build(SpaceConfig, space_doc, "space", {"max_layers", "max_blocks"},
                   {"max_layers": int, "max_blocks": int})
    model = _build(HyperParams, _section(doc.get("model"), "model"), "model", types=_MODEL_TYPES)

    agent_doc = dict(_section(doc.get("agent"), "agent"))
    budget_doc = {k: agent_doc.pop(k) for k in ("block_episodes", "arch_episodes", "pool_size") if k in agent_doc}
    for k, v in budget_doc.items():
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            raise ConfigError(f"agent.{k}", f"expected a positive integer, got {v!r}")
    budget = SearchBudget(**budget_doc)
    agent = _build(AgentConfig, agent_doc, "agent", types=_AGENT_TYPES)

    out = doc.get("output_dir", "runs/latest")
    if not isinstance(out, str) or not out:
        raise ConfigError("output_dir", "expected a non-empty string")
    return RunConfig(seed, dataset, space, model, agent, budget, ev, out, jobs, every, source)


def load_config(path, check_paths: bool = True) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("", f"cannot read {path}: {exc.strerror or exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return config_from_dict(doc, path.parent, check_paths, str(path))
