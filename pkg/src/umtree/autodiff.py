"""Dense-tensor reverse-mode autodiff, float64, with exactly the ops the models need.

Graphs are built eagerly per forward pass and consumed by one backward pass.
Leaf tensors with ``requires_grad`` accumulate into ``.grad`` across backward
calls until ``zero_grad`` is called on them.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "tensor",
    "no_grad",
    "add",
    "sub",
    "mul",
    "matmul",
    "sigmoid",
    "tanh",
    "exp",
    "log",
    "clip",
    "sum_all",
    "concat",
    "stack_rows",
    "tile_row",
    "take_row",
    "gather_rows",
    "softmax_over",
    "max_over_sequence",
    "lstm_cell",
    "conv1d_same",
    "bce_sum",
    "ce_logits",
]


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible; message names both shapes."""


_state = threading.local()


def _grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad():
    """Disable graph construction (frozen-parameter decoding)."""
    prev = _grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


def _as_f64(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    return arr


class Tensor:
    """A float64 array plus an optional accumulated gradient of the same shape."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, values, requires_grad: bool = False,
                 _parents: tuple = (), _backward=None):
        self.data = _as_f64(values)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def _accum(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad += g

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar; rhs may be a Tensor, scalar or ndarray
    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __neg__(self):
        return mul(self, _lift(-1.0))

    def __matmul__(self, other):
        return matmul(self, _lift(other))


def tensor(values, requires_grad: bool = False) -> Tensor:
    return Tensor(values, requires_grad=requires_grad)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(values: np.ndarray, parents: tuple, backward) -> Tensor:
    if _grad_enabled() and any(p.requires_grad for p in parents):
        out = Tensor(values, requires_grad=True, _parents=parents, _backward=None)
        out._backward = backward(out)
        return out
    return Tensor(values)


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every tensor reachable from a scalar loss."""
    if loss.data.ndim != 0:
        raise ShapeError(f"backward requires a scalar loss, got shape {loss.shape}")
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    loss._accum(np.ones_like(loss.data))
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to the operand's shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def add(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data + b.data

    def bwd(out):
        def run(g):
            if a.requires_grad:
                a._accum(_unbroadcast(g, a.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(g, b.shape))
        return run

    return _make(out_data, (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data - b.data

    def bwd(out):
        def run(g):
            if a.requires_grad:
                a._accum(_unbroadcast(g, a.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(-g, b.shape))
        return run

    return _make(out_data, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data * b.data

    def bwd(out):
        def run(g):
            if a.requires_grad:
                a._accum(_unbroadcast(g * b.data, a.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(g * a.data, b.shape))
        return run

    return _make(out_data, (a, b), bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product for 2-D operands; 1-D operands follow numpy vector rules."""
    ad, bd = a.data, b.data
    if ad.ndim not in (1, 2) or bd.ndim not in (1, 2):
        raise ShapeError(f"matmul supports 1-D/2-D operands, got {ad.shape} @ {bd.shape}")
    inner_a = ad.shape[-1]
    inner_b = bd.shape[0]
    if inner_a != inner_b:
        raise ShapeError(f"matmul inner dimensions disagree: {ad.shape} @ {bd.shape}")
    out_data = ad @ bd

    def bwd(out):
        def run(g):
            if a.requires_grad:
                if ad.ndim == 1 and bd.ndim == 2:
                    ga = bd @ g
                elif ad.ndim == 2 and bd.ndim == 1:
                    ga = g[:, None] * bd[None, :]
                elif ad.ndim == 1 and bd.ndim == 1:
                    ga = g * bd
                else:
                    ga = g @ bd.T
                a._accum(ga)
            if b.requires_grad:
                if ad.ndim == 1 and bd.ndim == 2:
                    gb = ad[:, None] * g[None, :]
                elif ad.ndim == 2 and bd.ndim == 1:
                    gb = ad.T @ g
                elif ad.ndim == 1 and bd.ndim == 1:
                    gb = g * ad
                else:
                    gb = ad.T @ g
                b._accum(gb)
        return run

    return _make(out_data, (a, b), bwd)


def _stable_sigmoid(z: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(x: Tensor) -> Tensor:
    s = _stable_sigmoid(x.data)

    def bwd(out):
        def run(g):
            if x.requires_grad:
                x._accum(g * s * (1.0 - s))
        return run

    return _make(s, (x,), bwd)


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)

    def bwd(out):
        def run(g):
            if x.requires_grad:
                x._accum(g * (1.0 - t * t))
        return run

    return _make(t, (x,), bwd)


def exp(x: Tensor) -> Tensor:
    e = np.exp(x.data)

    def bwd(out):
        def run(g):
            if x.requires_grad:
                x._accum(g * e)
        return run

    return _make(e, (x,), bwd)


def log(x: Tensor) -> Tensor:
    out_data = np.log(x.data)

    def bwd(out):
        def run(g):
            if x.requires_grad:
                x._accum(g / x.data)
        return run

    return _make(out_data, (x,), bwd)


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    out_data = np.clip(x.data, lo, hi)
    inside = (x.data > lo) & (x.data < hi)

    def bwd(out):
        def run(g):
            if x.requires_grad:
                x._accum(g * inside)
        return run

    return _make(out_data, (x,), bwd)


def sum_all(x: Tensor) -> Tensor:
    out_data = np.asarray(x.data.sum())

    def bwd(out):
        def run(g):
            if x.requires_grad:
                x._accum(np.full_like(x.data, float(g)))
        return run

    return _make(out_data, (x,), bwd)


def concat(parts: list[Tensor], axis: int = 0) -> Tensor:
    out_data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def bwd(out):
        def run(g):
            for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
                if p.requires_grad:
                    idx = [slice(None)] * g.ndim
                    idx[axis] = slice(lo, hi)
                    p._accum(g[tuple(idx)])
        return run

    return _make(out_data, tuple(parts), bwd)


def stack_rows(rows: list[Tensor]) -> Tensor:
    """Stack 1-D tensors of equal length into an [n, d] matrix."""
    out_data = np.stack([r.data for r in rows], axis=0)

    def bwd(out):
        def run(g):
            for i, r in enumerate(rows):
                if r.requires_grad:
                    r._accum(g[i])
        return run

    return _make(out_data, tuple(rows), bwd)


def tile_row(v: Tensor, n: int) -> Tensor:
    """Replicate a 1-D tensor into n identical rows."""
    if v.data.ndim != 1:
        raise ShapeError(f"tile_row expects a vector, got shape {v.shape}")
    out_data = np.tile(v.data, (n, 1))

    def bwd(out):
        def run(g):
            if v.requires_grad:
                v._accum(g.sum(axis=0))
        return run

    return _make(out_data, (v,), bwd)


def take_row(x: Tensor, i: int) -> Tensor:
    n = x.data.shape[0]
    if not 0 <= i < n:
        raise ShapeError(f"row index {i} out of range for shape {x.shape}")
    out_data = x.data[i].copy()

    def bwd(out):
        def run(g):
            if x.requires_grad:
                full = np.zeros_like(x.data)
                full[i] = g
                x._accum(full)
        return run

    return _make(out_data, (x,), bwd)


def gather_rows(table: Tensor, ids: list[int]) -> Tensor:
    """Row lookup (embedding); repeated ids accumulate gradient per occurrence."""
    n = table.data.shape[0]
    for i in ids:
        if not 0 <= i < n:
            raise ShapeError(f"row id {i} out of range for table shape {table.shape}")
    idx = np.asarray(ids, dtype=np.intp)
    out_data = table.data[idx]

    def bwd(out):
        def run(g):
            if table.requires_grad:
                full = np.zeros_like(table.data)
                np.add.at(full, idx, g)
                table._accum(full)
        return run

    return _make(out_data, (table,), bwd)


def softmax_over(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def bwd(out):
        def run(g):
            if x.requires_grad:
                inner = (g * s).sum(axis=axis, keepdims=True)
                x._accum((g - inner) * s)
        return run

    return _make(s, (x,), bwd)


def max_over_sequence(x: Tensor) -> Tensor:
    """Column-wise max of an [n, h] tensor; ties route gradient to the lowest row."""
    if x.data.ndim != 2:
        raise ShapeError(f"max_over_sequence expects [n, h], got shape {x.shape}")
    arg = x.data.argmax(axis=0)  # first occurrence on ties
    out_data = x.data[arg, np.arange(x.data.shape[1])]

    def bwd(out):
        def run(g):
            if x.requires_grad:
                full = np.zeros_like(x.data)
                full[arg, np.arange(x.data.shape[1])] = g
                x._accum(full)
        return run

    return _make(out_data, (x,), bwd)


def _slice_vec(x: Tensor, lo: int, hi: int) -> Tensor:
    out_data = x.data[lo:hi]

    def bwd(out):
        def run(g):
            if x.requires_grad:
                full = np.zeros_like(x.data)
                full[lo:hi] = g
                x._accum(full)
        return run

    return _make(out_data, (x,), bwd)


def lstm_cell(x: Tensor, h_prev: Tensor, c_prev: Tensor,
              w_ih: Tensor, w_hh: Tensor, b: Tensor) -> tuple[Tensor, Tensor]:
    """One gated recurrent step; returns (h_next, c_next).

    Gate layout along the 4H axis is input, forget, candidate, output.
    Fused: both outputs share one graph node whose analytic backward runs the
    gate chain a single time.
    """
    hdim = h_prev.data.shape[0]
    if x.data.ndim != 1 or h_prev.data.ndim != 1 or c_prev.data.ndim != 1:
        raise ShapeError(
            f"lstm_cell expects vectors, got x{x.shape} h{h_prev.shape} c{c_prev.shape}")
    if w_ih.data.shape != (x.data.shape[0], 4 * hdim) or w_hh.data.shape != (hdim, 4 * hdim):
        raise ShapeError(
            f"lstm_cell weight shapes {w_ih.shape}, {w_hh.shape} do not match "
            f"input {x.shape} and hidden {h_prev.shape}")

    z = x.data @ w_ih.data + h_prev.data @ w_hh.data + b.data
    zi, zf, zg, zo = np.split(z, 4)
    i = _stable_sigmoid(zi)
    f = _stable_sigmoid(zf)
    g_c = np.tanh(zg)
    o = _stable_sigmoid(zo)
    c_new = f * c_prev.data + i * g_c
    tc = np.tanh(c_new)
    h_new = o * tc

    def bwd(out):
        def run(g):
            dh = g[:hdim]
            dc = g[hdim:] + dh * o * (1.0 - tc * tc)
            do = dh * tc
            dz = np.empty(4 * hdim)
            dz[:hdim] = (dc * g_c) * i * (1.0 - i)
            dz[hdim:2 * hdim] = (dc * c_prev.data) * f * (1.0 - f)
            dz[2 * hdim:3 * hdim] = (dc * i) * (1.0 - g_c * g_c)
            dz[3 * hdim:] = do * o * (1.0 - o)
            if x.requires_grad:
                x._accum(w_ih.data @ dz)
            if h_prev.requires_grad:
                h_prev._accum(w_hh.data @ dz)
            if c_prev.requires_grad:
                c_prev._accum(dc * f)
            if w_ih.requires_grad:
                w_ih._accum(x.data[:, None] * dz[None, :])
            if w_hh.requires_grad:
                w_hh._accum(h_prev.data[:, None] * dz[None, :])
            if b.requires_grad:
                b._accum(dz)
        return run

    combined = _make(np.concatenate([h_new, c_new]),
                     (x, h_prev, c_prev, w_ih, w_hh, b), bwd)
    return _slice_vec(combined, 0, hdim), _slice_vec(combined, hdim, 2 * hdim)


def conv1d_same(seq: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    """1-D convolution over the sequence axis with zero same-padding.

    seq is [n, d_in], kernel is [width, d_in, d_out], bias is [d_out].
    Output length equals input length for any n >= 1.
    """
    if seq.data.ndim != 2:
        raise ShapeError(f"conv1d_same expects [n, d_in], got shape {seq.shape}")
    n, d_in = seq.data.shape
    if n < 1:
        raise ShapeError("conv1d_same requires a nonempty sequence")
    width, kd_in, d_out = kernel.data.shape
    if kd_in != d_in:
        raise ShapeError(
            f"conv1d_same kernel {kernel.shape} does not match input {seq.shape}")
    pad = width // 2

    out_data = np.tile(bias.data, (n, 1))
    for j in range(width):
        # output position p reads input row p + j - pad
        lo_out = max(0, pad - j)
        hi_out = min(n, n + pad - j)
        if lo_out >= hi_out:
            continue
        out_data[lo_out:hi_out] += seq.data[lo_out + j - pad:hi_out + j - pad] @ kernel.data[j]

    def bwd(out):
        def run(g):
            if seq.requires_grad:
                gs = np.zeros_like(seq.data)
                for j in range(width):
                    lo_out = max(0, pad - j)
                    hi_out = min(n, n + pad - j)
                    if lo_out >= hi_out:
                        continue
                    gs[lo_out + j - pad:hi_out + j - pad] += g[lo_out:hi_out] @ kernel.data[j].T
                seq._accum(gs)
            if kernel.requires_grad:
                gk = np.zeros_like(kernel.data)
                for j in range(width):
                    lo_out = max(0, pad - j)
                    hi_out = min(n, n + pad - j)
                    if lo_out >= hi_out:
                        continue
                    gk[j] = seq.data[lo_out + j - pad:hi_out + j - pad].T @ g[lo_out:hi_out]
                kernel._accum(gk)
            if bias.requires_grad:
                bias._accum(g.sum(axis=0))
        return run

    return _make(out_data, (seq, kernel, bias), bwd)


_BCE_EPS = 1e-7


def bce_sum(probs: Tensor, targets: np.ndarray) -> Tensor:
    """Summed binary cross-entropy over all elements against a multi-hot target.

    Probabilities are clamped to [1e-7, 1 - 1e-7]; gradient is zero where
    the clamp is active.
    """
    t = np.asarray(targets, dtype=np.float64)
    if t.shape != probs.data.shape:
        raise ShapeError(f"bce_sum target shape {t.shape} != probs shape {probs.shape}")
    p = np.clip(probs.data, _BCE_EPS, 1.0 - _BCE_EPS)
    inside = (probs.data > _BCE_EPS) & (probs.data < 1.0 - _BCE_EPS)
    loss = -(t * np.log(p) + (1.0 - t) * np.log(1.0 - p)).sum()

    def bwd(out):
        def run(g):
            if probs.requires_grad:
                dp = (-t / p + (1.0 - t) / (1.0 - p)) * inside
                probs._accum(float(g) * dp)
        return run

    return _make(np.asarray(loss), (probs,), bwd)


def ce_logits(logits: Tensor, target_id: int) -> Tensor:
    """Cross-entropy of a single class against a logit vector (log-softmax NLL)."""
    if logits.data.ndim != 1:
        raise ShapeError(f"ce_logits expects a logit vector, got shape {logits.shape}")
    v = logits.data.shape[0]
    if not 0 <= target_id < v:
        raise ShapeError(f"target id {target_id} out of range for {v} classes")
    shifted = logits.data - logits.data.max()
    logz = np.log(np.exp(shifted).sum())
    loss = logz - shifted[target_id]
    soft = np.exp(shifted - logz)

    def bwd(out):
        def run(g):
            if logits.requires_grad:
                d = soft.copy()
                d[target_id] -= 1.0
                logits._accum(float(g) * d)
        return run

    return _make(np.asarray(loss), (logits,), bwd)
