"""GNN engine: generalized layers, model assembly and training."""
from blocknas.gnn.checkpoint import CheckpointError, load_model, save_model, sidecar_path
from blocknas.gnn.layers import (
    LAYER_KINDS,
    LayerParams,
    aggregate,
    attention,
    beta_at_depth,
    init_layer,
    layer_forward,
)
from blocknas.gnn.model import (
    BlockInstance,
    EvaluationResult,
    HyperParams,
    ModelGraph,
    accuracy,
    block_forward,
    build_model,
    evaluate_model,
    init_rng,
    model_forward,
    train_model,
)
