"""Two-stage search driver, block pool, evaluators and reports."""
from blocknas.search.ablation import (
    AblationRow,
    ablation_csv,
    chain_variant,
    diversity_ablation,
    dominant_type,
    stacked,
    truncate_block,
)
from blocknas.search.evaluators import (
    DataSpec,
    Dataset,
    Evaluator,
    Outcome,
    SyntheticEvaluator,
    TrainingEvaluator,
    prepare_dataset,
)
from blocknas.search.oracles import (
    FAMILIES,
    arch_oracle_spec,
    block_oracle_spec,
    motif_code,
    oracle_reward,
)
from blocknas.search.pool import (
    BlockPool,
    PoolEntry,
    PoolFileError,
    load_pool,
    save_pool,
    update_gbp,
)
from blocknas.search.runner import (
    Interrupted,
    SearchError,
    SearchRun,
    TraceRow,
    TransferError,
    load_run,
    random_search,
    search_arch,
    search_blocks,
    trace_csv,
    transfer,
)
from blocknas.search.report import report, summary_record
