"""Reverse-mode differentiation over a closed vocabulary of 2-D ops.

Forward ops run eagerly on numpy arrays.  While a :class:`Tape` is active
(``with Tape() as tape:``), every op whose inputs require gradients appends
a backward closure to it; ``tape.backward(loss)`` replays them in reverse.
Outside a tape the ops are plain numpy code, which is what evaluation uses.
"""
from __future__ import annotations

import contextvars
from typing import Callable

import numpy as np


class ShapeError(ValueError):
    pass


class StateError(RuntimeError):
    pass


class NumericFault(FloatingPointError):
    pass


_ACTIVE: contextvars.ContextVar["Tape | None"] = contextvars.ContextVar("blocknas_tape", default=None)


class Tensor:
    """A 2-D array with an optional gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got shape {arr.shape}")
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data[0, 0])

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}{self.data.shape}"

    # operator sugar for the common cases
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)


class Tape:
    def __init__(self):
        self._records: list[tuple[Tensor, Callable[[np.ndarray], None]]] = []
        self._token = None

    def __enter__(self) -> "Tape":
        self._token = _ACTIVE.set(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.reset(self._token)
        self._token = None

    def __len__(self):
        return len(self._records)

    def record(self, out: Tensor, backward: Callable[[np.ndarray], None]) -> None:
        self._records.append((out, backward))

    def backward(self, loss: Tensor, params=None) -> None:
        """Accumulate d(loss)/d(x) into ``x.grad`` for every tensor on the tape.

        When ``params`` (a ParamStore) is given, parameters the loss does not
        reach get an all-zero gradient.
        """
        if not self._records:
            raise StateError("backward called before any recorded forward pass")
        if loss.shape != (1, 1):
            raise ShapeError(f"loss must be a 1x1 tensor, got {loss.shape}")
        if not loss.requires_grad:
            raise StateError("loss does not depend on any tensor that requires grad")
        loss.grad = np.ones_like(loss.data)
        for out, fn in reversed(self._records):
            if out.grad is not None:
                fn(out.grad)
        self._records.clear()
        if params is not None:
            params.fill_missing_grads()


def _tape_for(*inputs: Tensor) -> Tape | None:
    tape = _ACTIVE.get()
    if tape is None:
        return None
    return tape if any(t.requires_grad for t in inputs) else None


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype, copy=True)
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if g.shape == shape:
        return g
    if shape[0] == 1 and g.shape[0] != 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        g = g.sum(axis=1, keepdims=True)
    return g


def _result(data: np.ndarray, tape: Tape | None, backward, name: str | None = None) -> Tensor:
    out = Tensor(data, requires_grad=tape is not None, name=name)
    if tape is not None:
        tape.record(out, backward)
    return out


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    for da, db in zip(a.shape, b.shape):
        if da != db and da != 1 and db != 1:
            raise ShapeError(f"{op}: cannot broadcast {a.shape} with {b.shape}")


# --- linear algebra -------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    tape = _tape_for(a, b)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g @ b.data.T)
        if b.requires_grad:
            _accumulate(b, a.data.T @ g)
    return _result(a.data @ b.data, tape, backward)


def spmm(adj, h: Tensor) -> Tensor:
    """Sparse-dense product with a constant sparse operand.

    ``adj`` is a NormAdj (its GCN coefficients are used) or any scipy sparse
    matrix.
    """
    m = adj.matrix() if hasattr(adj, "matrix") else adj
    if m.shape[1] != h.shape[0]:
        raise ShapeError(f"spmm: adjacency {m.shape} vs features {h.shape}")
    tape = _tape_for(h)

    def backward(g):
        _accumulate(h, m.T @ g)
    return _result(np.asarray(m @ h.data, dtype=h.data.dtype), tape, backward)


def weighted_spmm(adj, coef: Tensor, h: Tensor) -> Tensor:
    """``out[i] = sum_e coef[e] * h[cols[e]]`` over entries with ``rows[e] == i``."""
    if coef.shape != (adj.num_entries, 1):
        raise ShapeError(f"weighted_spmm: coef {coef.shape}, expected ({adj.num_entries}, 1)")
    if h.shape[0] != adj.num_nodes:
        raise ShapeError(f"weighted_spmm: {adj.num_nodes} nodes vs features {h.shape}")
    m = adj.matrix(coef.data)
    tape = _tape_for(coef, h)

    def backward(g):
        if h.requires_grad:
            _accumulate(h, m.T @ g)
        if coef.requires_grad:
            ge = np.einsum("ij,ij->i", g[adj.rows], h.data[adj.cols])
            _accumulate(coef, ge[:, None])
    return _result(np.asarray(m @ h.data, dtype=h.data.dtype), tape, backward)


def gather_rows(h: Tensor, adj, which: str) -> Tensor:
    """Per-entry copy of node rows: ``h[adj.rows]`` or ``h[adj.cols]``."""
    idx = adj.rows if which == "rows" else adj.cols
    if h.shape[0] != adj.num_nodes:
        raise ShapeError(f"gather_rows: {adj.num_nodes} nodes vs {h.shape}")
    tape = _tape_for(h)

    def backward(g):
        _accumulate(h, np.asarray(adj.gather_matrix(which) @ g))
    return _result(h.data[idx], tape, backward)


def edge_dot(a: Tensor, b: Tensor, adj) -> Tensor:
    """Per-entry inner product ``<a[rows[e]], b[cols[e]]>`` as an [E, 1] column."""
    if a.shape != b.shape or a.shape[0] != adj.num_nodes:
        raise ShapeError(f"edge_dot: {a.shape} vs {b.shape}")
    ar, bc = a.data[adj.rows], b.data[adj.cols]
    tape = _tape_for(a, b)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, np.asarray(adj.gather_matrix("rows") @ (g * bc)))
        if b.requires_grad:
            _accumulate(b, np.asarray(adj.gather_matrix("cols") @ (g * ar)))
    return _result(np.einsum("ij,ij->i", ar, bc)[:, None], tape, backward)


def segment_softmax(logits: Tensor, adj) -> Tensor:
    """Softmax of an [E, 1] column within each target node's entries."""
    if logits.shape != (adj.num_entries, 1):
        raise ShapeError(f"segment_softmax: {logits.shape}")
    x = logits.data[:, 0]
    if not np.isfinite(x).all():
        raise NumericFault("non-finite attention logits")
    starts = adj.indptr[:-1]
    seg_max = np.maximum.reduceat(x, starts)
    ex = np.exp(x - seg_max[adj.rows])
    denom = np.add.reduceat(ex, starts)
    s = ex / denom[adj.rows]
    tape = _tape_for(logits)

    def backward(g):
        gs = g[:, 0] * s
        _accumulate(logits, (gs - s * np.add.reduceat(gs, starts)[adj.rows])[:, None])
    return _result(s[:, None], tape, backward)


def segment_max(h: Tensor, adj) -> Tensor:
    """Elementwise max over each target node's sources ``h[cols]``.

    Ties split the gradient evenly among the maximizers.
    """
    if h.shape[0] != adj.num_nodes:
        raise ShapeError(f"segment_max: {adj.num_nodes} nodes vs {h.shape}")
    gathered = h.data[adj.cols]
    out = np.maximum.reduceat(gathered, adj.indptr[:-1], axis=0)
    tape = _tape_for(h)

    def backward(g):
        hit = (gathered == out[adj.rows]).astype(h.data.dtype)
        count = np.asarray(adj.gather_matrix("rows") @ hit)
        ge = hit * (g / count)[adj.rows]
        _accumulate(h, np.asarray(adj.gather_matrix("cols") @ ge))
    return _result(out, tape, backward)


# --- elementwise ----------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    tape = _tape_for(a, b)

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))
    return _result(a.data + b.data, tape, backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    tape = _tape_for(a, b)

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, -_unbroadcast(g, b.shape))
    return _result(a.data - b.data, tape, backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    tape = _tape_for(a, b)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g * a.data, b.shape))
    return _result(a.data * b.data, tape, backward)


def scale(a: Tensor, c: float) -> Tensor:
    tape = _tape_for(a)

    def backward(g):
        _accumulate(a, g * c)
    return _result(a.data * c, tape, backward)


def total(a: Tensor) -> Tensor:
    tape = _tape_for(a)

    def backward(g):
        _accumulate(a, np.full_like(a.data, g[0, 0]))
    return _result(np.array([[a.data.sum()]], dtype=a.data.dtype), tape, backward)


def row_l2_normalize(h: Tensor, eps: float = 1e-12) -> Tensor:
    norm = np.sqrt((h.data ** 2).sum(axis=1, keepdims=True))
    safe = np.maximum(norm, eps)
    y = h.data / safe
    tape = _tape_for(h)

    def backward(g):
        inside = norm > eps
        proj = (g * y).sum(axis=1, keepdims=True)
        _accumulate(h, np.where(inside, (g - y * proj) / safe, g / safe))
    return _result(y, tape, backward)


def pick(q: Tensor, idx) -> Tensor:
    """``q[i, idx[i]]`` as a column."""
    idx = np.asarray(idx, dtype=np.int64)
    if idx.shape != (q.shape[0],):
        raise ShapeError(f"pick: {len(idx)} indices for {q.shape[0]} rows")
    rows = np.arange(q.shape[0])
    tape = _tape_for(q)

    def backward(g):
        full = np.zeros_like(q.data)
        full[rows, idx] = g[:, 0]
        _accumulate(q, full)
    return _result(q.data[rows, idx][:, None], tape, backward)


# --- activations ----------------------------------------------------------

def relu(x: Tensor) -> Tensor:
    tape = _tape_for(x)
    pos = x.data > 0

    def backward(g):
        _accumulate(x, g * pos)
    return _result(np.where(pos, x.data, 0.0).astype(x.data.dtype), tape, backward)


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    tape = _tape_for(x)
    pos = x.data > 0

    def backward(g):
        _accumulate(x, np.where(pos, g, slope * g))
    return _result(np.where(pos, x.data, slope * x.data), tape, backward)


def prelu(x: Tensor, slope: Tensor) -> Tensor:
    if slope.shape != (1, 1):
        raise ShapeError("prelu slope is a single learnable scalar")
    tape = _tape_for(x, slope)
    pos = x.data > 0
    a = slope.data[0, 0]

    def backward(g):
        if x.requires_grad:
            _accumulate(x, np.where(pos, g, a * g))
        if slope.requires_grad:
            _accumulate(slope, np.array([[np.sum(np.where(pos, 0.0, g * x.data))]]))
    return _result(np.where(pos, x.data, a * x.data), tape, backward)


def elu(x: Tensor) -> Tensor:
    tape = _tape_for(x)
    pos = x.data > 0
    em1 = np.expm1(np.minimum(x.data, 0.0))

    def backward(g):
        _accumulate(x, np.where(pos, g, g * (em1 + 1.0)))
    return _result(np.where(pos, x.data, em1), tape, backward)


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    tape = _tape_for(x)

    def backward(g):
        _accumulate(x, g * (1.0 - y * y))
    return _result(y, tape, backward)


ACTIVATIONS = ("relu", "elu", "prelu", "tanh", "identity", "none")


def activation(kind: str, x: Tensor, slope: Tensor | None = None) -> Tensor:
    """Apply an activation by name; ``identity`` and ``none`` are both the identity map."""
    key = kind.lower()
    if key == "relu":
        return relu(x)
    if key == "elu":
        return elu(x)
    if key == "tanh":
        return tanh(x)
    if key == "prelu":
        if slope is None:
            raise StateError("prelu needs a registered slope parameter")
        return prelu(x, slope)
    if key in ("identity", "none"):
        return x
    raise ValueError(f"unknown activation {kind!r}")


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout; the identity when not training or ``rate == 0``."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate {rate} outside [0, 1)")
    if not training or rate == 0.0:
        return x
    dtype = x.data.dtype if x.data.dtype in (np.float32, np.float64) else np.float64
    keep = (rng.random(x.shape, dtype=dtype) >= rate).astype(x.data.dtype)
    keep *= 1.0 / (1.0 - rate)
    tape = _tape_for(x)

    def backward(g):
        _accumulate(x, g * keep)
    return _result(x.data * keep, tape, backward)


# --- losses ---------------------------------------------------------------

def log_softmax(x: Tensor) -> Tensor:
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    y = shifted - lse
    tape = _tape_for(x)

    def backward(g):
        _accumulate(x, g - np.exp(y) * g.sum(axis=1, keepdims=True))
    return _result(y, tape, backward)


def softmax(x: Tensor) -> Tensor:
    shifted = np.exp(x.data - x.data.max(axis=1, keepdims=True))
    s = shifted / shifted.sum(axis=1, keepdims=True)
    tape = _tape_for(x)

    def backward(g):
        _accumulate(x, s * (g - (g * s).sum(axis=1, keepdims=True)))
    return _result(s, tape, backward)


def masked_cross_entropy(logits: Tensor, labels: np.ndarray, mask: np.ndarray) -> Tensor:
    """Mean negative log-likelihood over the rows where ``mask`` is true."""
    labels = np.asarray(labels)
    mask = np.asarray(mask, dtype=bool)
    if labels.shape != (logits.shape[0],) or mask.shape != labels.shape:
        raise ShapeError("labels/mask must have one entry per logits row")
    idx = np.flatnonzero(mask)
    if not len(idx):
        raise ValueError("empty loss mask")
    lp = log_softmax(logits)
    tape = _tape_for(lp)
    n = len(idx)
    value = -lp.data[idx, labels[idx]].mean()

    def backward(g):
        full = np.zeros_like(lp.data)
        full[idx, labels[idx]] = -g[0, 0] / n
        _accumulate(lp, full)
    return _result(np.array([[value]], dtype=logits.data.dtype), tape, backward)


def mse(pred: Tensor, target) -> Tensor:
    target = np.asarray(target, dtype=pred.data.dtype).reshape(pred.shape)
    diff = pred.data - target
    tape = _tape_for(pred)

    def backward(g):
        _accumulate(pred, g[0, 0] * 2.0 * diff / diff.size)
    return _result(np.array([[np.mean(diff * diff)]], dtype=pred.data.dtype), tape, backward)
