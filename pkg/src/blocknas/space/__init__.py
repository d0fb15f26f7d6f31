"""Two-stage code spaces: block codes and architecture codes."""
from blocknas.space.codes import (
    ACTIVATIONS,
    ALPHAS,
    DROPOUTS,
    EOB,
    LAYER_TYPES,
    ArchCode,
    BlockCode,
    BlockGene,
    CodeError,
    LayerGene,
    ParseError,
    SpaceConfig,
    Violation,
    block_code,
    chain_block,
    code_file_text,
    code_stage,
    eob_block,
    eob_layer,
    ensure_valid_arch,
    ensure_valid_block,
    parse_code,
    serialize_code,
    validate_arch,
    validate_block,
)
from blocknas.space.structure import (
    ArchPlan,
    BlockDAG,
    BlockPlan,
    DecodeError,
    StateError,
    count_archs,
    count_blocks,
    count_report,
    decode_arch,
    decode_block,
    is_terminal,
    standard_architecture,
    standard_plan,
    valid_actions_arch,
    valid_actions_block,
)
