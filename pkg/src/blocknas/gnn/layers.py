"""The generalized layer with initial residual and identity mapping.

Every kind computes

    out = act( ((1 - alpha) * AGG(h) + alpha * h0) @ ((1 - beta) I + beta * theta) )

and differs only in the aggregation ``AGG``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from blocknas import nn
from blocknas.graphdata import NormAdj
from blocknas.nn import ParamStore, Tensor

LAYER_KINDS = ("GCNII", "GATII", "SAGEII-Mean", "SAGEII-Max", "AGNNII")
GAT_SLOPE = 0.2


def beta_at_depth(depth: int, lam: float) -> float:
    """Identity-mapping strength ``ln(lam / depth + 1)``."""
    if depth < 1:
        raise ValueError(f"layer depth must be >= 1, got {depth}")
    if lam <= 0:
        raise ValueError(f"lambda must be > 0, got {lam}")
    return math.log(lam / depth + 1.0)


@dataclass
class LayerParams:
    """Handles to one layer's tensors inside a shared ParamStore."""

    kind: str
    activation: str
    depth: int
    theta: Tensor
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.theta.shape[0] != self.theta.shape[1]:
            raise nn.ShapeError(f"theta must be square, got {self.theta.shape}")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")

    @property
    def hidden(self) -> int:
        return self.theta.shape[0]


def init_layer(store: ParamStore, prefix: str, kind: str, activation: str, depth: int,
               hidden: int, rng: np.random.Generator, dtype=np.float32) -> LayerParams:
    """Register a layer's parameters under ``prefix`` (all in the ``conv`` group)."""
    if kind not in LAYER_KINDS:
        raise ValueError(f"unknown layer kind {kind!r}")
    theta = store.add(f"{prefix}.theta", nn.glorot(rng, hidden, hidden), "conv", dtype)
    extras = {}
    if kind == "GATII":
        extras["att_dst"] = store.add(f"{prefix}.att_dst", nn.glorot(rng, hidden, 1), "conv", dtype)
        extras["att_src"] = store.add(f"{prefix}.att_src", nn.glorot(rng, hidden, 1), "conv", dtype)
    elif kind.startswith("SAGEII"):
        extras["neighbor"] = store.add(f"{prefix}.neighbor", np.eye(hidden), "conv", dtype)
    elif kind == "AGNNII":
        extras["temperature"] = store.add(f"{prefix}.temperature", [[1.0]], "conv", dtype)
    if activation.lower() == "prelu":
        extras["slope"] = store.add(f"{prefix}.slope", [[0.25]], "conv", dtype)
    return LayerParams(kind, activation, depth, theta, extras)


def attention(kind: str, params: LayerParams, h: Tensor, adj: NormAdj) -> Tensor:
    """Per-entry coefficients ([E, 1], softmax-normalized per target) for GATII and AGNNII."""
    if kind == "GATII":
        z = nn.matmul(h, params.theta)
        s_dst = nn.matmul(z, params.extras["att_dst"])
        s_src = nn.matmul(z, params.extras["att_src"])
        logits = nn.add(nn.gather_rows(s_dst, adj, "rows"), nn.gather_rows(s_src, adj, "cols"))
        return nn.segment_softmax(nn.leaky_relu(logits, GAT_SLOPE), adj)
    if kind == "AGNNII":
        unit = nn.row_l2_normalize(h)
        cos = nn.edge_dot(unit, unit, adj)
        return nn.segment_softmax(nn.mul(cos, params.extras["temperature"]), adj)
    raise ValueError(f"{kind} has no attention coefficients")


def aggregate(kind: str, params: LayerParams, h: Tensor, adj: NormAdj) -> Tensor:
    """The kind-specific neighborhood aggregation (self-loops included)."""
    if kind == "GCNII":
        return nn.spmm(adj, h)
    if kind in ("GATII", "AGNNII"):
        return nn.weighted_spmm(adj, attention(kind, params, h, adj), h)
    if kind == "SAGEII-Mean":
        return nn.spmm(adj.mean_matrix(), nn.matmul(h, params.extras["neighbor"]))
    if kind == "SAGEII-Max":
        return nn.segment_max(nn.matmul(h, params.extras["neighbor"]), adj)
    raise ValueError(f"unknown layer kind {kind!r}")


def layer_forward(kind: str, params: LayerParams, h: Tensor, h0: Tensor, adj: NormAdj,
                  alpha: float, beta: float) -> Tensor:
    if h.shape != h0.shape:
        raise nn.ShapeError(f"h {h.shape} and h0 {h0.shape} differ")
    if h.shape[0] != adj.num_nodes:
        raise nn.ShapeError(f"{h.shape[0]} rows for a {adj.num_nodes}-node adjacency")
    if h.shape[1] != params.hidden:
        raise nn.ShapeError(f"width {h.shape[1]} vs theta {params.theta.shape}")
    agg = aggregate(kind, params, h, adj)
    if alpha == 0.0:
        support = agg
    elif alpha == 1.0:
        support = h0
    else:
        support = nn.add(nn.scale(agg, 1.0 - alpha), nn.scale(h0, alpha))
    if beta == 0.0:
        out = support
    else:
        out = nn.add(nn.scale(support, 1.0 - beta), nn.scale(nn.matmul(support, params.theta), beta))
    return nn.activation(params.activation, out, params.extras.get("slope"))
