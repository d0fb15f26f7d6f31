"""Episode loops for block search, architecture search and the random baseline."""
from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from blocknas.agent import (
    AgentConfig,
    DQNAgent,
    EpsSchedule,
    StageSpec,
    arch_stage,
    block_stage,
    epsilon_at,
    select_action,
)
from blocknas.search.evaluators import Evaluator
from blocknas.search.pool import BlockPool, load_pool, pool_from_dict, pool_to_dict, update_gbp
from blocknas.space import (
    ArchCode,
    BlockCode,
    SpaceConfig,
    parse_code,
    serialize_code,
    valid_actions_arch,
    valid_actions_block,
)
from blocknas.space.codes import _block_gene, _layer_gene

MANIFEST = "manifest.json"
STATE = "state.npz"


class SearchError(RuntimeError):
    pass


class Interrupted(Exception):
    """Search stopped by the user after writing a checkpoint."""

    def __init__(self, episode: int, directory: Path | None):
        super().__init__(f"interrupted after episode {episode}")
        self.episode = episode
        self.directory = directory


@dataclass
class TraceRow:
    episode: int
    epsilon: float
    reward: float
    best_so_far: float
    code: str
    loss: float | None
    failed: bool = False
    wall_ms: float = 0.0


@dataclass
class SearchRun:
    stage: str
    policy: str
    budget: int
    seed: int
    trace: list[TraceRow] = field(default_factory=list)
    best_code: object = None
    best_score: float = -1.0
    best_episode: int = 0
    config: dict = field(default_factory=dict)
    sync_log: list[int] = field(default_factory=list)
    wall_time: float = 0.0
    transferred: bool = False
    pool: BlockPool | None = None
    blocks: list[BlockCode] | None = None

    @property
    def trajectory(self) -> list[tuple[int, float]]:
        return [(r.episode, r.best_so_far) for r in self.trace]

    @property
    def episodes_done(self) -> int:
        return len(self.trace)


def _streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    policy_ss, agent_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(policy_ss), np.random.default_rng(agent_ss)


@dataclass
class _Stage:
    name: str
    spec: StageSpec
    valid_fn: Callable[[list], list]
    make_code: Callable[[list], object]
    gene_from_list: Callable[[list], object]
    pool: Sequence[BlockCode] | None


def _block_setup(space: SpaceConfig) -> _Stage:
    return _Stage("block", block_stage(space), lambda genes: valid_actions_block(genes, space),
                  lambda genes: BlockCode(tuple(genes)), lambda row: _layer_gene(row, "checkpoint"), None)


def _arch_setup(pool: Sequence[BlockCode], space: SpaceConfig) -> _Stage:
    n = len(pool)
    return _Stage("arch", arch_stage(n, space), lambda genes: valid_actions_arch(genes, n, space),
                  lambda genes: ArchCode(tuple(genes)), lambda row: _block_gene(row, "checkpoint"), list(pool))


def _rollout(stage: _Stage, agent: DQNAgent | None, eps: float, rng: np.random.Generator) -> list:
    if agent is not None:
        return agent.rollout(eps, rng)
    genes: list = []
    while True:
        gene = select_action(None, 1.0, stage.valid_fn(genes), None, rng)
        genes.append(gene)
        if gene.is_eob:
            return genes


def _fmt(x: float) -> str:
    return repr(float(x))


def trace_csv(run: SearchRun) -> str:
    lines = ["episode,epsilon,reward,best_so_far,code,loss"]
    for r in run.trace:
        loss = "" if r.loss is None else _fmt(r.loss)
        code = '"' + r.code.replace('"', '""') + '"'
        lines.append(f"{r.episode},{_fmt(r.epsilon)},{_fmt(r.reward)},{_fmt(r.best_so_far)},{code},{loss}")
    return "\n".join(lines) + "\n"


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def _run(stage: _Stage, evaluator: Evaluator, budget: int, seed: int, policy: str,
         agent_cfg: AgentConfig, pool_capacity: int, run_dir: Path | None, resume: bool,
         config: dict, jobs: int, checkpoint_every: int,
         on_episode: Callable[[TraceRow], None] | None, force_epsilon: float | None,
         stop_after: int | None, transferred: bool = False) -> SearchRun:
    if budget < 1:
        raise SearchError("search budget must be at least one episode")
    if policy not in ("dqn", "random"):
        raise SearchError(f"unknown policy {policy!r}")
    policy_rng, agent_rng = _streams(seed)
    agent = DQNAgent(stage.spec, stage.valid_fn, agent_cfg, agent_rng) if policy == "dqn" else None
    run = SearchRun(stage.name, policy, budget, seed, config=config)
    run.blocks = None if stage.pool is None else list(stage.pool)
    run.transferred = transferred
    if stage.name == "block":
        run.pool = BlockPool(pool_capacity)
    sched = EpsSchedule(budget, agent_cfg.anneal_start)
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
        if resume and (run_dir / MANIFEST).exists():
            _restore(run_dir, run, stage, agent, evaluator, policy_rng)
    start_wall = time.perf_counter() - run.wall_time
    ep = run.episodes_done
    saved = ep
    consistent = True
    try:
        with ThreadPoolExecutor(max_workers=max(1, jobs)) as executor:
            while ep < budget:
                consistent = False
                width = min(max(1, jobs), budget - ep)
                batch = []
                for k in range(width):
                    eps = epsilon_at(ep + k, sched) if force_epsilon is None else force_epsilon
                    genes = _rollout(stage, agent, eps, policy_rng)
                    batch.append((eps, genes, stage.make_code(genes)))
                t0 = time.perf_counter()
                futures = [executor.submit(evaluator, code, stage.pool) for _, _, code in batch]
                for (eps, genes, code), fut in zip(batch, futures):
                    outcome = fut.result()
                    wall_ms = (time.perf_counter() - t0) * 1000.0
                    ep += 1
                    reward = float(outcome.reward)
                    loss = agent.learn(genes, reward) if agent is not None else None
                    text = serialize_code(code)
                    if reward > run.best_score:
                        run.best_score, run.best_code, run.best_episode = reward, code, ep
                    if run.pool is not None:
                        update_gbp(run.pool, code, reward, {"episode": ep, "seed": seed,
                                                            "dataset": config.get("dataset_name", "")})
                    row = TraceRow(ep, eps, reward, run.best_score, text, loss, outcome.failed, wall_ms)
                    run.trace.append(row)
                    if on_episode is not None:
                        on_episode(row)
                run.wall_time = time.perf_counter() - start_wall
                if agent is not None:
                    run.sync_log = list(agent.nets.sync_log)
                consistent = True
                if run_dir is not None and (ep % checkpoint_every == 0 or ep >= budget):
                    _checkpoint(run_dir, run, stage, agent, evaluator, policy_rng)
                    saved = ep
                if stop_after is not None and ep >= stop_after and ep < budget:
                    raise KeyboardInterrupt
    except KeyboardInterrupt:
        # Mid-episode state (policy stream, agent) is not resumable; fall back
        # to the last periodic checkpoint in that case.
        if run_dir is not None and consistent:
            run.wall_time = time.perf_counter() - start_wall
            _checkpoint(run_dir, run, stage, agent, evaluator, policy_rng)
            saved = ep
        raise Interrupted(saved if run_dir is not None else ep, run_dir) from None
    return run


# --- checkpoints ----------------------------------------------------------

def _checkpoint(run_dir: Path, run: SearchRun, stage: _Stage, agent: DQNAgent | None,
                evaluator: Evaluator, policy_rng: np.random.Generator) -> None:
    arrays = agent.state_arrays() if agent is not None else {}
    meta = {
        "stage": run.stage,
        "policy": run.policy,
        "budget": run.budget,
        "seed": run.seed,
        "episodes_done": run.episodes_done,
        "trace": [asdict(r) for r in run.trace],
        "best_code": None if run.best_code is None else run.best_code.to_lists(),
        "best_score": run.best_score,
        "best_episode": run.best_episode,
        "wall_time": run.wall_time,
        "policy_rng": policy_rng.bit_generator.state,
        "agent": agent.state_meta() if agent is not None else None,
        "pool": None if run.pool is None else pool_to_dict(run.pool, 0),
        "arch_pool": None if stage.pool is None else [b.to_lists() for b in stage.pool],
        "transferred": run.transferred,
        "cache": evaluator.cache_items(),
    }
    tmp = run_dir / (STATE + ".tmp")
    with open(tmp, "wb") as fh:
        np.savez(fh, **arrays)
    tmp.replace(run_dir / STATE)
    manifest = {"version": 1, "state": STATE, "config": run.config, **meta}
    _atomic_write(run_dir / MANIFEST, json.dumps(manifest, sort_keys=True) + "\n")


def _restore(run_dir: Path, run: SearchRun, stage: _Stage, agent: DQNAgent | None,
             evaluator: Evaluator, policy_rng: np.random.Generator) -> None:
    try:
        meta = json.loads((run_dir / MANIFEST).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SearchError(f"unreadable run manifest in {run_dir}: {exc}") from None
    for key in ("stage", "policy", "budget", "seed"):
        if meta.get(key) != getattr(run, key):
            raise SearchError(f"cannot resume: manifest {key}={meta.get(key)!r}, run has {getattr(run, key)!r}")
    run.trace = [TraceRow(**r) for r in meta["trace"]]
    run.best_score, run.best_episode = meta["best_score"], meta["best_episode"]
    if meta["best_code"] is not None:
        run.best_code = parse_code(json.dumps(meta["best_code"]), stage.name)
    run.wall_time = meta["wall_time"]
    if meta["pool"] is not None:
        run.pool, _ = pool_from_dict(meta["pool"])
    policy_rng.bit_generator.state = meta["policy_rng"]
    evaluator.load_cache(meta["cache"])
    if agent is not None:
        try:
            with np.load(run_dir / STATE, allow_pickle=False) as z:
                arrays = {k: z[k] for k in z.files}
        except (OSError, ValueError) as exc:
            raise SearchError(f"unreadable agent state in {run_dir}: {exc}") from None
        agent.load_state(arrays, meta["agent"], stage.gene_from_list)
        run.sync_log = list(agent.nets.sync_log)


def load_run(run_dir) -> SearchRun:
    """Rebuild the run record (trace, best code, pool) from a run directory's manifest."""
    run_dir = Path(run_dir)
    try:
        meta = json.loads((run_dir / MANIFEST).read_text())
        run = SearchRun(meta["stage"], meta["policy"], meta["budget"], meta["seed"], config=meta["config"])
        run.trace = [TraceRow(**r) for r in meta["trace"]]
        run.best_score, run.best_episode = meta["best_score"], meta["best_episode"]
        run.wall_time = meta["wall_time"]
        if meta["best_code"] is not None:
            run.best_code = parse_code(json.dumps(meta["best_code"]), run.stage)
        if meta["pool"] is not None:
            run.pool, _ = pool_from_dict(meta["pool"])
        if meta.get("arch_pool") is not None:
            run.blocks = [BlockCode.from_lists(b) for b in meta["arch_pool"]]
        run.transferred = bool(meta.get("transferred", False))
        if meta.get("agent"):
            run.sync_log = list(meta["agent"].get("sync_log", []))
    except OSError as exc:
        raise SearchError(f"no readable run manifest in {run_dir}: {exc.strerror or exc}") from None
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise SearchError(f"malformed run manifest in {run_dir}: {exc}") from None
    return run


# --- public entry points --------------------------------------------------

def search_blocks(space: SpaceConfig, agent_cfg: AgentConfig, evaluator: Evaluator, budget: int = 1500,
                  seed: int = 0, pool_capacity: int = 3, run_dir=None, resume: bool = False,
                  config: dict | None = None, jobs: int = 1, checkpoint_every: int = 10,
                  on_episode=None, force_epsilon: float | None = None,
                  stop_after: int | None = None) -> tuple[BlockPool, SearchRun]:
    """Block-wise DQN search; returns the final block pool and the run record."""
    run = _run(_block_setup(space), evaluator, budget, seed, "dqn", agent_cfg, pool_capacity,
               None if run_dir is None else Path(run_dir), resume, dict(config or {}), jobs,
               checkpoint_every, on_episode, force_epsilon, stop_after)
    return run.pool, run


def search_arch(pool: BlockPool | Sequence[BlockCode], space: SpaceConfig, agent_cfg: AgentConfig,
                evaluator: Evaluator, budget: int = 1000, seed: int = 0, run_dir=None,
                resume: bool = False, config: dict | None = None, jobs: int = 1,
                checkpoint_every: int = 10, on_episode=None,
                stop_after: int | None = None, transferred: bool = False) -> tuple[ArchCode, SearchRun]:
    """Architecture-wise DQN search over a fixed block pool, with a fresh agent."""
    codes = pool.codes if isinstance(pool, BlockPool) else list(pool)
    if not codes:
        raise SearchError("architecture search needs a non-empty block pool")
    run = _run(_arch_setup(codes, space), evaluator, budget, seed, "dqn", agent_cfg, 0,
               None if run_dir is None else Path(run_dir), resume, dict(config or {}), jobs,
               checkpoint_every, on_episode, None, stop_after, transferred)
    run.pool = pool if isinstance(pool, BlockPool) else None
    return run.best_code, run


def random_search(space: SpaceConfig, evaluator: Evaluator, budget: int, seed: int = 0,
                  stage: str = "block", pool: Sequence[BlockCode] | None = None,
                  agent_cfg: AgentConfig = AgentConfig(), pool_capacity: int = 3, run_dir=None,
                  resume: bool = False, config: dict | None = None, jobs: int = 1,
                  checkpoint_every: int = 10, on_episode=None) -> SearchRun:
    """Uniform sampling over valid actions with the same loop and trace format."""
    setup = _block_setup(space) if stage == "block" else _arch_setup(list(pool or []), space)
    if stage != "block" and not setup.pool:
        raise SearchError("architecture random search needs a non-empty block pool")
    return _run(setup, evaluator, budget, seed, "random", agent_cfg, pool_capacity,
                None if run_dir is None else Path(run_dir), resume, dict(config or {}), jobs,
                checkpoint_every, on_episode, None, None)


class TransferError(ValueError):
    pass


def transfer(gbp_file, space: SpaceConfig, agent_cfg: AgentConfig, evaluator: Evaluator,
             hidden: int, budget: int = 1000, seed: int = 0, **kwargs) -> tuple[ArchCode, SearchRun]:
    """Architecture search on a new dataset with blocks imported from ``gbp_file``."""
    pool, doc = load_pool(gbp_file)
    if int(doc.get("hidden", hidden)) != hidden:
        raise TransferError(f"block pool was searched with hidden size {doc.get('hidden')}, "
                            f"this configuration uses {hidden}")
    if not len(pool):
        raise TransferError("block pool file holds no blocks")
    return search_arch(pool, space, agent_cfg, evaluator, budget, seed, transferred=True, **kwargs)
