"""Independent reference computations used by the test suite.

Nothing here imports the code under test beyond plain data containers, so a
bug in the package cannot silently agree with itself.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

LAYER_TYPES = ("GCNII", "GATII", "SAGEII-Mean", "SAGEII-Max", "AGNNII")
ACTIVATIONS = ("ReLU", "ELU", "PReLU", "Tanh", "Identity", "none")


def finite_difference(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. every entry of ``x`` (mutated in place and restored)."""
    grad = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        up = f()
        x[i] = old - h
        down = f()
        x[i] = old
        grad[i] = (up - down) / (2 * h)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    if scale < 1e-12:
        return 0.0
    return float(np.linalg.norm(a - b) / scale)


def dense_gcn_matrix(n: int, edges) -> np.ndarray:
    """Renormalized adjacency D^-1/2 (A + I) D^-1/2 built densely."""
    a = np.eye(n)
    for u, v in edges:
        if u != v:
            a[u, v] = a[v, u] = 1.0
    d = a.sum(axis=1)
    return a / np.sqrt(np.outer(d, d))


def dense_neighbors(n: int, edges) -> list[list[int]]:
    nb = [{i} for i in range(n)]
    for u, v in edges:
        nb[u].add(v)
        nb[v].add(u)
    return [sorted(s) for s in nb]


def brute_force_block_count(max_layers: int, n_types: int = 5, n_acts: int = 6) -> int:
    """Enumerate every gene sequence layer by layer (prefix of layer i in {-1, 0, .., i-1})."""
    total = 0
    for length in range(1, max_layers + 1):
        prefixes = [range(-1, i) for i in range(1, length + 1)]
        for _ in itertools.product(*prefixes):
            total += (n_types * n_acts) ** length
    return total


def brute_force_blocks(max_layers: int, types=LAYER_TYPES, acts=ACTIVATIONS):
    """Yield every valid block as a list of 4-element rows (EoB row included)."""
    for length in range(1, max_layers + 1):
        choices = [[(t, a, p) for t in types for a in acts for p in range(-1, i)]
                   for i in range(1, length + 1)]
        for combo in itertools.product(*choices):
            rows = [[i + 1, t, a, p] for i, (t, a, p) in enumerate(combo)]
            yield rows + [[length + 1, "EoB", None, None]]


def beta(l: int, lam: float) -> float:
    return math.log(lam / l + 1.0)


def q_values_by_dp(states, actions, transition, reward, terminal, gamma: float = 1.0) -> dict:
    """Exact Q* for a finite acyclic MDP by backward recursion."""
    memo: dict = {}

    def v(s):
        if terminal(s):
            return 0.0
        return max(q(s, a) for a in actions(s))

    def q(s, a):
        key = (s, a)
        if key not in memo:
            s2 = transition(s, a)
            memo[key] = reward(s, a) + (0.0 if terminal(s2) else gamma * v(s2))
        return memo[key]

    return {(s, a): q(s, a) for s in states if not terminal(s) for a in actions(s)}


# --- dense GNN layer references -------------------------------------------

def _leaky(x, slope=0.2):
    return np.where(x > 0, x, slope * x)


def dense_aggregate(kind: str, h: np.ndarray, n: int, edges, theta=None, att_dst=None, att_src=None,
                    neighbor=None, temperature=None) -> np.ndarray:
    """Per-node aggregation written loop-by-loop over closed neighborhoods."""
    nb = dense_neighbors(n, edges)
    out = np.zeros_like(h)
    if kind == "GCNII":
        return dense_gcn_matrix(n, edges) @ h
    if kind == "GATII":
        z = h @ theta
        for i in range(n):
            logits = np.array([_leaky(z[i] @ att_dst[:, 0] + z[j] @ att_src[:, 0]) for j in nb[i]])
            w = np.exp(logits - logits.max())
            w /= w.sum()
            out[i] = sum(wk * h[j] for wk, j in zip(w, nb[i]))
        return out
    if kind == "SAGEII-Mean":
        t = h @ neighbor
        return np.array([t[nb[i]].mean(axis=0) for i in range(n)])
    if kind == "SAGEII-Max":
        t = h @ neighbor
        return np.array([t[nb[i]].max(axis=0) for i in range(n)])
    if kind == "AGNNII":
        unit = h / np.maximum(np.linalg.norm(h, axis=1, keepdims=True), 1e-12)
        for i in range(n):
            logits = np.array([temperature * (unit[i] @ unit[j]) for j in nb[i]])
            w = np.exp(logits - logits.max())
            w /= w.sum()
            out[i] = sum(wk * h[j] for wk, j in zip(w, nb[i]))
        return out
    raise ValueError(kind)


def dense_activation(kind: str, x: np.ndarray, slope: float = 0.25) -> np.ndarray:
    k = kind.lower()
    if k == "relu":
        return np.maximum(x, 0)
    if k == "elu":
        return np.where(x > 0, x, np.expm1(np.minimum(x, 0)))
    if k == "prelu":
        return np.where(x > 0, x, slope * x)
    if k == "tanh":
        return np.tanh(x)
    return x
