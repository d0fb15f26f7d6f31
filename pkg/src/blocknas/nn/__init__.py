"""Numerical substrate: 2-D tensors, a reverse-mode tape, Adam and a small MLP."""
from .mlp import MLP2, glorot, mlp2_forward
from .params import AdamConfig, ParamStore, adam_step, read_checkpoint, save_checkpoint
from .tape import (
    ACTIVATIONS,
    NumericFault,
    ShapeError,
    StateError,
    Tape,
    Tensor,
    activation,
    add,
    dropout,
    edge_dot,
    elu,
    gather_rows,
    leaky_relu,
    log_softmax,
    masked_cross_entropy,
    matmul,
    mse,
    mul,
    pick,
    prelu,
    relu,
    row_l2_normalize,
    scale,
    segment_max,
    segment_softmax,
    softmax,
    spmm,
    sub,
    tanh,
    total,
    weighted_spmm,
)
