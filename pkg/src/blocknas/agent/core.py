"""Deep Q-learning over gene-by-gene code construction.

The Q-network maps the one-hot encoding of the previous gene (all zeros for
the start state) to one value per slot of the stage's action table.  A slot
is a gene with its index stripped; the index is implied by the state.
"""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from blocknas import nn
from blocknas.space import EOB, LayerGene, SpaceConfig


class EncodeError(ValueError):
    """A gene field lies outside the stage's option tables."""


class AgentStateError(RuntimeError):
    pass


# --- action tables and featurization -------------------------------------

def _slot_key(gene) -> tuple:
    if isinstance(gene, LayerGene):
        return (gene.layer_type, gene.activation, gene.prefix)
    return (gene.block_type, gene.dropout, gene.alpha, gene.prefix)


def gene_sort_key(gene) -> str:
    """Serialized form used to break Q-value ties deterministically."""
    return json.dumps(gene.to_list(), separators=(",", ":"))


@dataclass(frozen=True)
class StageSpec:
    """Action table and one-hot layout for one stage."""

    stage: str
    slots: tuple[tuple, ...]
    fields: tuple[tuple, ...]
    max_index: int

    def __post_init__(self):
        object.__setattr__(self, "_slot_of", {k: i for i, k in enumerate(self.slots)})

    @property
    def num_actions(self) -> int:
        return len(self.slots)

    @property
    def width(self) -> int:
        return self.max_index + sum(len(f) for f in self.fields)

    def slot(self, gene) -> int:
        try:
            return self._slot_of[_slot_key(gene)]
        except KeyError:
            raise EncodeError(f"gene {gene.to_list()} has no action slot") from None

    def featurize(self, gene) -> np.ndarray:
        """One-hot ``[index | field_1 | field_2 | ...]``; ``None`` (start) encodes as zeros."""
        vec = np.zeros(self.width)
        if gene is None:
            return vec
        if not 1 <= gene.index <= self.max_index:
            raise EncodeError(f"index {gene.index} outside 1..{self.max_index}")
        vec[gene.index - 1] = 1.0
        offset = self.max_index
        values = gene.to_list()[1:]
        for value, options in zip(values, self.fields):
            if value is not None:
                try:
                    pos = options.index(value)
                except ValueError:
                    raise EncodeError(f"value {value!r} not in {options}") from None
                vec[offset + pos] = 1.0
            offset += len(options)
        return vec

    def mask(self, genes: Sequence) -> np.ndarray:
        m = np.zeros(self.num_actions, dtype=bool)
        for g in genes:
            m[self.slot(g)] = True
        return m


def block_stage(cfg: SpaceConfig = SpaceConfig()) -> StageSpec:
    prefixes = tuple(range(-1, cfg.max_layers))
    slots = [(t, a, p) for t in cfg.layer_types for a in cfg.activations for p in prefixes]
    slots.append((EOB, None, None))
    fields = (
        tuple(cfg.layer_types) + (EOB,),
        tuple(cfg.activations),
        tuple(range(-1, cfg.max_layers + 1)),
    )
    return StageSpec("block", tuple(slots), fields, cfg.max_layers + 1)


def arch_stage(pool_size: int, cfg: SpaceConfig = SpaceConfig()) -> StageSpec:
    if pool_size < 1:
        raise AgentStateError("architecture stage needs a non-empty block pool")
    prefixes = tuple(range(-1, cfg.max_blocks))
    slots = [(b, d, a, p) for b in range(pool_size) for d in cfg.dropouts
             for a in cfg.alphas for p in prefixes]
    slots.append((EOB, None, None, None))
    fields = (
        tuple(range(pool_size)) + (EOB,),
        tuple(cfg.dropouts),
        tuple(cfg.alphas),
        tuple(range(-1, cfg.max_blocks + 1)),
    )
    return StageSpec("arch", tuple(slots), fields, cfg.max_blocks + 1)


# --- exploration schedule -------------------------------------------------

@dataclass(frozen=True)
class EpsSchedule:
    total: int
    anneal_start: float = 0.4

    def __post_init__(self):
        if self.total < 1:
            raise ValueError("schedule needs at least one episode")
        if not 0.0 <= self.anneal_start < 1.0:
            raise ValueError("anneal_start must lie in [0, 1)")


def epsilon_at(ep: int, sched: EpsSchedule) -> float:
    """Exploration probability: 1 until ``anneal_start * T``, then cosine decay to 0 at ``T``."""
    T = sched.total
    if not 0 <= ep <= T:
        raise ValueError(f"episode {ep} outside 0..{T}")
    start = sched.anneal_start * T
    if ep < start:
        return 1.0
    if ep >= T:
        return 0.0
    return 0.5 * (1.0 + math.cos(math.pi * (ep - start) / (T - start)))


# --- rewards and replay ---------------------------------------------------

def reshape_reward(final_reward: float, code_len: int) -> float:
    if code_len < 1:
        raise ValueError("code length must be >= 1")
    return final_reward / code_len


@dataclass(frozen=True)
class Transition:
    state: object
    action: object
    reward: float
    next_state: object
    terminal: bool
    state_vec: np.ndarray = field(repr=False, compare=False, default=None)
    action_slot: int = -1
    next_vec: np.ndarray = field(repr=False, compare=False, default=None)
    next_mask: np.ndarray = field(repr=False, compare=False, default=None)


class ReplayBuffer:
    """FIFO ring of transitions."""

    def __init__(self, capacity: int = 300):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._items: deque[Transition] = deque(maxlen=capacity)

    def __len__(self):
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def __getitem__(self, i):
        return self._items[i]

    def append(self, t: Transition) -> None:
        self._items.append(t)

    def clear(self) -> None:
        self._items.clear()


def store_episode(buf: ReplayBuffer, transitions: Sequence[Transition]) -> ReplayBuffer:
    if not transitions:
        raise ValueError("an episode has at least one transition")
    if not transitions[-1].terminal or any(t.terminal for t in transitions[:-1]):
        raise ValueError("episode must end with its only terminal transition")
    for t in transitions:
        buf.append(t)
    return buf


# --- networks -------------------------------------------------------------

@dataclass(frozen=True)
class AgentConfig:
    hidden: int = 64
    lr: float = 0.01
    gamma: float = 1.0
    batch_size: int = 32
    capacity: int = 300
    sync_period: int = 100
    anneal_start: float = 0.4
    updates_per_episode: int = 1

    def __post_init__(self):
        if min(self.hidden, self.batch_size, self.capacity, self.sync_period) < 1:
            raise ValueError("hidden, batch_size, capacity and sync_period must be >= 1")
        if self.updates_per_episode < 0:
            raise ValueError("updates_per_episode must be >= 0")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma outside [0, 1]")
        if self.lr <= 0:
            raise ValueError("lr must be > 0")


class QNetPair:
    def __init__(self, in_dim: int, num_actions: int, hidden: int, rng: np.random.Generator,
                 sync_period: int = 100):
        self.eval_net = nn.MLP2(in_dim, hidden, num_actions, rng)
        self.target_net = nn.MLP2(in_dim, hidden, num_actions, rng)
        self.target_net.params.copy_values_from(self.eval_net.params)
        self.sync_period = sync_period
        self.episodes = 0
        self.sync_log: list[int] = []

    def q_values(self, x: np.ndarray, target: bool = False) -> np.ndarray:
        net = self.target_net if target else self.eval_net
        return net(nn.Tensor(np.atleast_2d(x))).data

    def end_episode(self) -> bool:
        """Count an episode; sync the target net every ``sync_period`` episodes."""
        self.episodes += 1
        if self.episodes % self.sync_period == 0:
            sync_target(self)
            self.sync_log.append(self.episodes)
            return True
        return False


def sync_target(nets: QNetPair) -> QNetPair:
    nets.target_net.params.copy_values_from(nets.eval_net.params)
    return nets


def select_action(state_vec: np.ndarray, eps: float, valid: Sequence, nets: QNetPair | None,
                  rng: np.random.Generator, spec: StageSpec | None = None):
    """Epsilon-greedy choice among ``valid``.

    Always draws the exploration coin first, then (when exploring) one
    uniform index, so runs with the same policy stream stay aligned.
    """
    if not valid:
        raise AgentStateError("no valid actions")
    coin = rng.random()
    if coin < eps:
        return valid[int(rng.integers(len(valid)))]
    if nets is None or spec is None:
        raise AgentStateError("greedy selection needs networks and a stage spec")
    q = nets.q_values(state_vec)[0]
    slots = np.array([spec.slot(g) for g in valid])
    vals = q[slots]
    best = vals.max()
    ties = [g for g, v in zip(valid, vals) if v == best]
    return min(ties, key=gene_sort_key) if len(ties) > 1 else ties[0]


def td_targets(batch: Sequence[Transition], nets: QNetPair, gamma: float) -> np.ndarray:
    y = np.array([t.reward for t in batch], dtype=np.float64)
    live = [i for i, t in enumerate(batch) if not t.terminal]
    if live and gamma != 0.0:
        nxt = np.stack([batch[i].next_vec for i in live])
        q_next = nets.q_values(nxt, target=True)
        masks = np.stack([batch[i].next_mask for i in live])
        best = np.where(masks, q_next, -np.inf).max(axis=1)
        y[live] += gamma * best
    return y


def td_update(buf: ReplayBuffer, nets: QNetPair, rng: np.random.Generator, batch_size: int = 32,
              gamma: float = 1.0, lr: float = 0.01) -> float | None:
    """One Adam step on a uniform minibatch; ``None`` when the buffer is underfull."""
    if len(buf) < batch_size:
        return None
    idx = rng.choice(len(buf), size=batch_size, replace=False)
    batch = [buf[int(i)] for i in idx]
    y = td_targets(batch, nets, gamma)
    x = np.stack([t.state_vec for t in batch])
    actions = np.array([t.action_slot for t in batch])
    params = nets.eval_net.params
    params.zero_grad()
    with nn.Tape() as tape:
        q = nn.pick(nets.eval_net(nn.Tensor(x)), actions)
        loss = nn.mse(q, y[:, None])
    tape.backward(loss, params)
    nn.adam_step(params, lr)
    return loss.item()


# --- agent ----------------------------------------------------------------

@dataclass
class Episode:
    genes: list
    transitions: list[Transition]


class DQNAgent:
    """Eval/target networks, replay memory and the rollout loop for one stage."""

    def __init__(self, spec: StageSpec, valid_fn: Callable[[list], list], config: AgentConfig,
                 rng: np.random.Generator):
        self.spec = spec
        self.valid_fn = valid_fn
        self.config = config
        self.rng = rng
        self.nets = QNetPair(spec.width, spec.num_actions, config.hidden, rng, config.sync_period)
        self.buffer = ReplayBuffer(config.capacity)

    def rollout(self, eps: float, policy_rng: np.random.Generator) -> list:
        """Sample genes until EoB."""
        genes: list = []
        while True:
            prev = genes[-1] if genes else None
            valid = self.valid_fn(genes)
            gene = select_action(self.spec.featurize(prev), eps, valid, self.nets, policy_rng, self.spec)
            genes.append(gene)
            if gene.is_eob:
                return genes

    def transitions(self, genes: list, final_reward: float) -> list[Transition]:
        r = reshape_reward(final_reward, len(genes))
        out = []
        for i, gene in enumerate(genes):
            prev = genes[i - 1] if i else None
            terminal = gene.is_eob
            next_mask = None if terminal else self.spec.mask(self.valid_fn(genes[: i + 1]))
            out.append(Transition(prev, gene, r, None if terminal else gene, terminal,
                                  self.spec.featurize(prev), self.spec.slot(gene),
                                  None if terminal else self.spec.featurize(gene), next_mask))
        return out

    def learn(self, genes: list, final_reward: float) -> float | None:
        """Store the episode, take ``updates_per_episode`` TD steps, count the episode.

        Returns the last minibatch loss, or ``None`` while the buffer is underfull.
        """
        store_episode(self.buffer, self.transitions(genes, final_reward))
        c = self.config
        loss = None
        for _ in range(c.updates_per_episode):
            step = td_update(self.buffer, self.nets, self.rng, c.batch_size, c.gamma, c.lr)
            loss = step if step is not None else loss
        self.nets.end_episode()
        return loss

    # checkpoint support
    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for tag, net in (("eval", self.nets.eval_net), ("target", self.nets.target_net)):
            for k, v in net.params.state_arrays().items():
                out[f"{tag}/{k}"] = v
        out["eval_step"] = np.array(self.nets.eval_net.params.step)
        items = list(self.buffer)
        w, a = self.spec.width, self.spec.num_actions
        out["buffer/state_vec"] = np.array([t.state_vec for t in items]).reshape(-1, w)
        out["buffer/action_slot"] = np.array([t.action_slot for t in items], dtype=np.int64)
        out["buffer/reward"] = np.array([t.reward for t in items], dtype=np.float64)
        out["buffer/terminal"] = np.array([t.terminal for t in items], dtype=bool)
        out["buffer/next_vec"] = np.array([np.zeros(w) if t.terminal else t.next_vec
                                           for t in items]).reshape(-1, w)
        out["buffer/next_mask"] = np.array([np.zeros(a, bool) if t.terminal else t.next_mask
                                            for t in items]).reshape(-1, a)
        return out

    def state_meta(self) -> dict:
        return {
            "episodes": self.nets.episodes,
            "sync_log": list(self.nets.sync_log),
            "buffer_genes": [[_gene_list(t.state), t.action.to_list()] for t in self.buffer],
            "rng": self.rng.bit_generator.state,
        }

    def load_state(self, arrays: dict, meta: dict, gene_from_list: Callable) -> None:
        for tag, net in (("eval", self.nets.eval_net), ("target", self.nets.target_net)):
            sub = {k[len(tag) + 1:]: v for k, v in arrays.items() if k.startswith(tag + "/")}
            net.params.load_state_arrays(sub, int(arrays["eval_step"]) if tag == "eval" else 0)
        self.nets.episodes = int(meta["episodes"])
        self.nets.sync_log = [int(e) for e in meta["sync_log"]]
        self.rng.bit_generator.state = meta["rng"]
        self.buffer.clear()
        for i, (state, action) in enumerate(meta["buffer_genes"]):
            terminal = bool(arrays["buffer/terminal"][i])
            gene = gene_from_list(action)
            self.buffer.append(Transition(
                None if state is None else gene_from_list(state), gene,
                float(arrays["buffer/reward"][i]), None if terminal else gene, terminal,
                arrays["buffer/state_vec"][i].copy(), int(arrays["buffer/action_slot"][i]),
                None if terminal else arrays["buffer/next_vec"][i].copy(),
                None if terminal else arrays["buffer/next_mask"][i].copy()))


def _gene_list(gene):
    return None if gene is None else gene.to_list()
