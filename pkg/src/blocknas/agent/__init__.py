"""DQN search agent."""
from blocknas.agent.core import (
    AgentConfig,
    AgentStateError,
    DQNAgent,
    EncodeError,
    EpsSchedule,
    QNetPair,
    ReplayBuffer,
    StageSpec,
    Transition,
    arch_stage,
    block_stage,
    epsilon_at,
    gene_sort_key,
    reshape_reward,
    select_action,
    store_episode,
    sync_target,
    td_targets,
    td_update,
)
