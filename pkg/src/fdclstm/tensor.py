"""Dense float64 tensors with reverse-mode automatic differentiation.

The computation graph is implicit: each tensor produced by an operation keeps
references to the parents that require gradients plus a closure that routes
the upstream gradient to them. ``Tensor.backward`` walks the graph once in
reverse topological order (iteratively, so deep recurrent graphs do not hit
the recursion limit) and accumulates into ``.grad``, which makes fan-out add
contributions as required.

Also here: the Adam optimizer state and step, global-norm gradient clipping,
and a self-describing binary checkpoint format (see ``save_checkpoint``).

Dropout randomness is counter-based: the caller supplies a key tuple and the
mask is a pure function of (key, shape), so re-running a forward pass with
the same key is bit-identical.
"""

from __future__ import annotations

import hashlib
import json
import struct
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from . import rng as _rng
from .errors import (
    DoubleBackward,
    InvalidStride,
    NonScalarLoss,
    ShapeMismatch,
)

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph tracking inside the block (evaluation-mode forwards)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "_backward_ran")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward_fn = None
        self._backward_ran = False

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operator sugar; floats and arrays are wrapped as constants
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sigmoid(self):
        return sigmoid(self)

    def tanh(self):
        return tanh(self)

    def relu(self):
        return relu(self)

    def sqrt(self):
        return sqrt(self)

    def sum(self):
        return tsum(self)

    def mean(self):
        return tmean(self)

    def reshape(self, shape):
        return reshape(self, shape)

    def slice(self, axis, start, stop):
        return slice_axis(self, axis, start, stop)

    def backward(self):
        """Reverse-mode sweep from a scalar; repeat calls on the same root raise."""
        if self.data.size != 1:
            raise NonScalarLoss(f"loss must be scalar, got shape {self.data.shape}")
        if self._backward_ran:
            raise DoubleBackward("backward already ran for this graph root")
        self._backward_ran = True

        topo = _toposort(self)
        self.grad = np.ones_like(self.data)
        for t in reversed(topo):
            if t._backward_fn is not None:
                t._backward_fn(t.grad)

    def zero_grad(self):
        self.grad = None


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _toposort(root: Tensor) -> list[Tensor]:
    # iterative post-order DFS; recurrent graphs are far deeper than the
    # Python recursion limit
    topo: list[Tensor] = []
    visited = {id(root)}
    stack: list[tuple[Tensor, iter]] = [(root, iter(root._parents))]
    while stack:
        node, children = stack[-1]
        advanced = False
        for child in children:
            if id(child) not in visited:
                visited.add(id(child))
                stack.append((child, iter(child._parents)))
                advanced = True
                break
        if not advanced:
            topo.append(node)
            stack.pop()
    return topo


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _make(data: np.ndarray, parents: tuple, backward_fn) -> Tensor:
    track = _grad_enabled and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=track)
    if track:
        out._parents = tuple(p for p in parents if p.requires_grad)
        out._backward_fn = backward_fn
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the original shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, (gs, ss) in enumerate(zip(g.shape, shape)):
        if ss == 1 and gs != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


# --- elementwise and linear algebra ops ----------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def bwd(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return _make(data, (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    data = a.data - b.data

    def bwd(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(-g, b.data.shape))

    return _make(data, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def bwd(g):
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(data, (a, b), bwd)


def neg(a: Tensor) -> Tensor:
    def bwd(g):
        _accumulate(a, -g)

    return _make(-a.data, (a,), bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeMismatch(f"matmul needs 2-D operands, got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeMismatch(f"inner dimensions differ: {a.data.shape} @ {b.data.shape}")
    data = a.data @ b.data

    def bwd(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _make(data, (a, b), bwd)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)

    def bwd(g):
        _accumulate(a, g * out * (1.0 - out))

    return _make(out, (a,), bwd)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def bwd(g):
        _accumulate(a, g * (1.0 - out * out))

    return _make(out, (a,), bwd)


def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.data, 0.0)

    def bwd(g):
        _accumulate(a, g * (a.data > 0.0))

    return _make(out, (a,), bwd)


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)

    def bwd(g):
        _accumulate(a, g * 0.5 / out)

    return _make(out, (a,), bwd)


def dropout(a: Tensor, p: float, key: tuple, training: bool = True) -> Tensor:
    """Inverted dropout; identity when not training or p == 0.

    The keep-mask is a pure function of the key, so replaying a forward pass
    with the same key reproduces it exactly.
    """
    if not 0.0 <= p < 1.0:
        raise ShapeMismatch(f"dropout rate must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return a
    mask = _rng.dropout_mask(a.data.shape, p, tuple(key))
    data = a.data * mask

    def bwd(g):
        _accumulate(a, g * mask)

    return _make(data, (a,), bwd)


def concat(tensors: list[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise ShapeMismatch("concat of zero tensors")
    tensors = [_as_tensor(t) for t in tensors]
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise ShapeMismatch(str(e)) from None
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accumulate(t, g[tuple(idx)])

    return _make(data, tuple(tensors), bwd)


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)
    data = a.data[idx]

    def bwd(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        _accumulate(a, full)

    return _make(data, (a,), bwd)


def reshape(a: Tensor, shape) -> Tensor:
    data = a.data.reshape(shape)

    def bwd(g):
        _accumulate(a, g.reshape(a.data.shape))

    return _make(data, (a,), bwd)


def tsum(a: Tensor) -> Tensor:
    data = np.asarray(a.data.sum())

    def bwd(g):
        _accumulate(a, np.broadcast_to(g, a.data.shape).copy())

    return _make(data, (a,), bwd)


def tmean(a: Tensor) -> Tensor:
    n = a.data.size
    data = np.asarray(a.data.mean())

    def bwd(g):
        _accumulate(a, np.broadcast_to(g / n, a.data.shape).copy())

    return _make(data, (a,), bwd)


# --- convolution and pooling ---------------------------------------------


def conv1d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    """Cross-correlation of x[C_in, L] with w[C_out, C_in, K] plus bias b[C_out]."""
    if stride <= 0:
        raise InvalidStride(f"stride must be positive, got {stride}")
    if x.data.ndim != 2 or w.data.ndim != 3 or b.data.ndim != 1:
        raise ShapeMismatch(
            f"conv1d expects x[C,L], w[O,C,K], b[O]; got {x.data.shape}, {w.data.shape}, {b.data.shape}"
        )
    c_out, c_in, k = w.data.shape
    if x.data.shape[0] != c_in or b.data.shape[0] != c_out:
        raise ShapeMismatch(f"channel mismatch: x{x.data.shape} w{w.data.shape} b{b.data.shape}")
    length = x.data.shape[1]
    if length + 2 * pad < k:
        raise ShapeMismatch(f"input length {length} with pad {pad} shorter than kernel {k}")
    l_out = (length + 2 * pad - k) // stride + 1

    xp = np.pad(x.data, ((0, 0), (pad, pad))) if pad else x.data
    windows = np.lib.stride_tricks.sliding_window_view(xp, k, axis=1)[:, ::stride, :]
    # windows: [C_in, L_out, K]
    data = np.einsum("oik,ilk->ol", w.data, windows) + b.data[:, None]

    def bwd(g):
        _accumulate(w, np.einsum("ol,ilk->oik", g, windows))
        _accumulate(b, g.sum(axis=1))
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            gw = np.einsum("ol,oik->ilk", g, w.data)
            for kk in range(k):
                gxp[:, kk : kk + stride * l_out : stride] += gw[:, :, kk]
            _accumulate(x, gxp[:, pad : pad + length] if pad else gxp)

    return _make(data, (x, w, b), bwd)


def maxpool1d(x: Tensor, k: int) -> Tensor:
    """Non-overlapping max pooling along the last axis; trailing remainder dropped."""
    if k <= 0:
        raise InvalidStride(f"pool width must be positive, got {k}")
    if x.data.ndim != 2:
        raise ShapeMismatch(f"maxpool1d expects x[C,L], got {x.data.shape}")
    c, length = x.data.shape
    l_out = length // k
    if l_out == 0:
        raise ShapeMismatch(f"input length {length} shorter than pool width {k}")
    view = x.data[:, : l_out * k].reshape(c, l_out, k)
    argmax = view.argmax(axis=2)
    data = np.take_along_axis(view, argmax[:, :, None], axis=2)[:, :, 0]

    def bwd(g):
        gview = np.zeros((c, l_out, k))
        np.put_along_axis(gview, argmax[:, :, None], g[:, :, None], axis=2)
        full = np.zeros_like(x.data)
        full[:, : l_out * k] = gview.reshape(c, l_out * k)
        _accumulate(x, full)

    return _make(data, (x,), bwd)


def backward(loss: Tensor) -> None:
    """Functional alias for Tensor.backward."""
    loss.backward()


# --- optimizer ------------------------------------------------------------


@dataclass
class AdamState:
    """Per-parameter Adam moments; k counts completed steps."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    k: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params: list[Tensor], lr: float, **kw) -> "AdamState":
        state = cls(lr=lr, **kw)
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
        return state


def adam_step(params: list[Tensor], grads: list[np.ndarray], state: AdamState):
    """Bias-corrected Adam update, in place on params. Returns (params, state)."""
    if not (len(params) == len(grads) == len(state.m) == len(state.v)):
        raise ShapeMismatch("params, grads, and state lengths differ")
    state.k += 1
    c1 = 1.0 - state.beta1**state.k
    c2 = 1.0 - state.beta2**state.k
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.data.shape != g.shape:
            raise ShapeMismatch(f"grad shape {g.shape} does not match param {p.data.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


def clip_global_norm(grads: list[np.ndarray], max_norm: float) -> float:
    """Scale gradients in place so their joint L2 norm is at most max_norm."""
    total = 0.0
    for g in grads:
        total += float((g * g).sum())
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for g in grads:
            g *= scale
    return norm


# --- checkpoint format ------------------------------------------------------
#
# Layout (little endian):
#   8 bytes   magic b"FDTNSR01"
#   4 bytes   uint32 header length
#   N bytes   UTF-8 JSON header:
#             {"format_version": 1, "manifest": {...},
#              "params": [{"name": str, "shape": [int, ...]}, ...]}
#   payload   raw float64 arrays, row-major, in header order
#
# The header is serialized with sorted keys and no timestamps, so identical
# parameters produce byte-identical files.

CHECKPOINT_MAGIC = b"FDTNSR01"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, params: dict[str, Tensor], manifest: dict | None = None) -> None:
    entries = []
    blobs = []
    for name, p in params.items():
        arr = np.ascontiguousarray(p.data if isinstance(p, Tensor) else p, dtype=np.float64)
        entries.append({"name": name, "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    header = json.dumps(
        {"format_version": CHECKPOINT_VERSION, "manifest": manifest or {}, "params": entries},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if header["format_version"] != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported format version {header['format_version']}")
        arrays = {}
        for entry in header["params"]:
            shape = tuple(entry["shape"])
            n = int(np.prod(shape)) if shape else 1
            buf = fh.read(8 * n)
            arrays[entry["name"]] = np.frombuffer(buf, dtype=np.float64).reshape(shape).copy()
    return arrays, header["manifest"]


def checkpoint_hash(path) -> str:
    """SHA-256 of the checkpoint bytes (deterministic for equal parameters)."""
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
