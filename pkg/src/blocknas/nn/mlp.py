from __future__ import annotations

import numpy as np

from .params import ParamStore
from .tape import ShapeError, Tensor, activation, add, matmul


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, dtype=np.float64) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype)


class MLP2:
    """Two-layer perceptron ``act(x W1 + b1) W2 + b2`` backed by its own ParamStore."""

    def __init__(self, in_dim: int, hidden: int, out_dim: int, rng: np.random.Generator,
                 hidden_activation: str = "relu", dtype=np.float64):
        self.in_dim, self.hidden, self.out_dim = in_dim, hidden, out_dim
        self.hidden_activation = hidden_activation
        self.params = ParamStore()
        self.params.add("weight1", glorot(rng, in_dim, hidden), dtype=dtype)
        self.params.add("bias1", np.zeros((1, hidden)), dtype=dtype)
        self.params.add("weight2", glorot(rng, hidden, out_dim), dtype=dtype)
        self.params.add("bias2", np.zeros((1, out_dim)), dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return mlp2_forward(self, x)


def mlp2_forward(net: MLP2, x: Tensor) -> Tensor:
    if x.shape[1] != net.in_dim:
        raise ShapeError(f"MLP2 expects width {net.in_dim}, got {x.shape[1]}")
    p = net.params
    h = activation(net.hidden_activation, add(matmul(x, p["weight1"]), p["bias1"]))
    return add(matmul(h, p["weight2"]), p["bias2"])
