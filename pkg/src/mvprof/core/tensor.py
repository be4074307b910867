"""Dense float64 tensors with tape-based reverse-mode differentiation.

Operations are recorded only while a :class:`Graph` is active (``with Graph() as g``)
and at least one operand requires a gradient. Outside a graph every op is a plain
numpy evaluation, which makes inference on frozen models safe to run from several
threads at once.

Broadcasting is deliberately narrow: two operands are compatible when their shapes
are equal or when one shape is a trailing suffix of the other (for example ``[D]``
against ``[B, T, D]``, or ``[L, D]`` against ``[B, L, D]``). Anything else must go
through :func:`broadcast_to` explicitly.
"""

from __future__ import annotations

import contextvars
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..errors import ContractError, DimensionError, NumericError

GELU_C = 0.7978845608028654
GELU_K = 0.044715

_ACTIVE: contextvars.ContextVar["Graph | None"] = contextvars.ContextVar(
    "mvprof_active_graph", default=None
)


class Tensor:
    """Row-major float64 array with an optional gradient slot."""

    __slots__ = ("data", "requires_grad", "grad", "node", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data)
        # extended precision is only ever introduced by the gradient checker
        self.data = arr if arr.dtype == np.longdouble else arr.astype(np.float64, copy=False)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.node: Node | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def node_id(self) -> int | None:
        if self.node is None or self.node.graph is None:
            return None
        return self.node.index

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _not_scalar(self)

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={list(self.shape)}{flag})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __getitem__(self, idx):
        return getitem(self, idx)


def _not_scalar(t: Tensor):
    raise ContractError(f"item() needs a single-element tensor, got shape {list(t.shape)}")


@dataclass(eq=False)
class Node:
    op: str
    inputs: tuple[Tensor, ...]
    vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None
    index: int
    graph: "Graph | None"


@dataclass(eq=False)
class Graph:
    """Append-only tape of recorded operations for one forward pass.

    Insertion order is a topological order because an op can only consume tensors
    that already exist. The tape is released by :meth:`backward`.
    """

    nodes: list[Node] = field(default_factory=list)
    _tokens: list = field(default_factory=list, repr=False)

    def __enter__(self) -> "Graph":
        self._tokens.append(_ACTIVE.set(self))
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.reset(self._tokens.pop())

    def record(self, op: str, inputs: tuple[Tensor, ...], out: Tensor, vjp) -> None:
        node = Node(op, inputs, vjp, len(self.nodes), self)
        self.nodes.append(node)
        out.node = node

    def backward(self, loss: Tensor) -> None:
        backward(loss, self)

    def free(self) -> None:
        for node in self.nodes:
            node.graph = None
            node.vjp = None
            node.inputs = ()
        self.nodes = []


def active_graph() -> Graph | None:
    return _ACTIVE.get()


def backward(loss: Tensor, graph: Graph) -> None:
    """Propagate d(loss)/d(leaf) into ``.grad`` of every requires-grad leaf.

    Gradients accumulate additively into existing ``.grad`` buffers, so callers
    clear them between optimisation steps.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {list(loss.shape)}")
    if loss.node is None or loss.node.graph is not graph:
        if loss.requires_grad and loss.node is None:
            _accumulate_leaf(loss, np.ones_like(loss.data))
            return
        raise ContractError("loss was not recorded on this graph")

    pending: list[np.ndarray | None] = [None] * len(graph.nodes)
    pending[loss.node.index] = np.ones_like(loss.data)
    for node in reversed(graph.nodes[: loss.node.index + 1]):
        g = pending[node.index]
        if g is None:
            continue
        pending[node.index] = None
        for t, gi in zip(node.inputs, node.vjp(g)):
            if gi is None or not t.requires_grad:
                continue
            if t.node is None:
                _accumulate_leaf(t, gi)
            elif t.node.graph is graph:
                j = t.node.index
                pending[j] = gi if pending[j] is None else pending[j] + gi
    graph.free()


def _accumulate_leaf(t: Tensor, g: np.ndarray) -> None:
    g = np.asarray(g, dtype=np.float64).reshape(t.shape)
    t.grad = g.copy() if t.grad is None else t.grad + g


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _emit(op: str, out: np.ndarray, inputs: tuple[Tensor, ...], vjp) -> Tensor:
    graph = _ACTIVE.get()
    if graph is None or not any(t.requires_grad for t in inputs):
        return Tensor(out)
    res = Tensor(out, requires_grad=True)
    graph.record(op, inputs, res, vjp)
    return res


# ---------------------------------------------------------------------------
# broadcasting helpers


def _check_pair(op: str, a: tuple[int, ...], b: tuple[int, ...]) -> None:
    if a == b:
        return
    short, long_ = (a, b) if len(a) <= len(b) else (b, a)
    if long_[len(long_) - len(short):] != short:
        raise DimensionError(f"{op}: shapes {list(a)} and {list(b)} are not suffix-compatible")


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    return g.reshape((-1,) + shape).sum(axis=0) if lead > 0 else g


def _sum_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    lead = g.ndim - len(shape)
    if lead:
        g = g.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, (s, gs) in enumerate(zip(shape, g.shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_pair("add", a.shape, b.shape)
    sa, sb = a.shape, b.shape
    return _emit("add", a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_pair("sub", a.shape, b.shape)
    sa, sb = a.shape, b.shape
    return _emit("sub", a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_pair("mul", a.shape, b.shape)
    ad, bd = a.data, b.data
    return _emit("mul", ad * bd, (a, b),
                 lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_pair("div", a.shape, b.shape)
    ad, bd = a.data, b.data
    out = ad / bd
    return _emit("div", out, (a, b),
                 lambda g: (_unbroadcast(g / bd, ad.shape),
                            _unbroadcast(-g * out / bd, bd.shape)))


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    return _emit("scale", x.data * c, (x,), lambda g: (g * c,))


def sigmoid(x: Tensor) -> Tensor:
    e = np.exp(-np.abs(x.data))
    s = np.where(x.data >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _emit("sigmoid", s, (x,), lambda g: (g * s * (1.0 - s),))


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)
    return _emit("tanh", t, (x,), lambda g: (g * (1.0 - t * t),))


def relu(x: Tensor) -> Tensor:
    on = x.data > 0
    return _emit("relu", np.where(on, x.data, 0.0), (x,), lambda g: (g * on,))


def gelu(x: Tensor) -> Tensor:
    """GELU, tanh approximation."""
    xd = x.data
    x2 = xd * xd
    t = np.tanh(GELU_C * xd * (1.0 + GELU_K * x2))
    out = 0.5 * xd * (1.0 + t)

    def vjp(g):
        dt = (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x2)
        return (g * (0.5 * (1.0 + t) + 0.5 * xd * dt),)

    return _emit("gelu", out, (x,), vjp)


def softplus(x: Tensor) -> Tensor:
    xd = x.data
    out = np.log1p(np.exp(-np.abs(xd))) + np.maximum(xd, 0.0)
    e = np.exp(-np.abs(xd))
    s = np.where(xd >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _emit("softplus", out, (x,), lambda g: (g * s,))


# ---------------------------------------------------------------------------
# shape manipulation


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes.

    ``b`` is either a matrix shared by every leading index of ``a`` or carries the
    same leading axes as ``a``.
    """
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2] or (
        b.ndim > 2 and a.shape[:-2] != b.shape[:-2]
    ):
        raise DimensionError(f"matmul: cannot multiply {list(a.shape)} by {list(b.shape)}")
    ad, bd = a.data, b.data
    out = ad @ bd

    def vjp(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        if bd.ndim == 2:
            gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            gb = np.swapaxes(ad, -1, -2) @ g
        return ga, gb

    return _emit("matmul", out, (a, b), vjp)


def transpose(x: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    inv = tuple(np.argsort(axes))
    return _emit("transpose", np.transpose(x.data, axes), (x,),
                 lambda g: (np.transpose(g, inv),))


def swap_last(x: Tensor) -> Tensor:
    axes = list(range(x.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(x, axes)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    src = x.shape
    try:
        out = x.data.reshape(tuple(shape))
    except ValueError as exc:
        raise DimensionError(f"reshape: cannot view {list(src)} as {list(shape)}") from exc
    return _emit("reshape", out, (x,), lambda g: (g.reshape(src),))


def broadcast_to(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    src = x.shape
    try:
        out = np.broadcast_to(x.data, shape).copy()
    except ValueError as exc:
        raise DimensionError(f"broadcast_to: {list(src)} -> {list(shape)}") from exc
    return _emit("broadcast_to", out, (x,), lambda g: (_sum_to(g, src),))


def sum(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    src = x.shape

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, src).copy(),)

    return _emit("sum", np.asarray(x.data.sum(axis=axis, keepdims=keepdims)), (x,), vjp)


def mean_axis(x: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    n = x.shape[axis]
    src = x.shape

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / n, src).copy(),)

    return _emit("mean_axis", x.data.mean(axis=axis, keepdims=keepdims), (x,), vjp)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = tuple(tensors)
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        shapes = [list(t.shape) for t in tensors]
        raise DimensionError(f"concat: incompatible shapes {shapes} on axis {axis}") from exc
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _emit("concat", out, tensors, lambda g: tuple(np.split(g, bounds, axis=axis)))


def _is_basic(idx) -> bool:
    parts = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(p, (int, np.integer, slice)) or p is None or p is Ellipsis for p in parts)


def getitem(x: Tensor, idx) -> Tensor:
    """numpy-style indexing; advanced (integer array) indices scatter-add on backward."""
    if isinstance(idx, list):
        idx = np.asarray(idx)
    src = x.shape
    try:
        out = x.data[idx]
    except IndexError as exc:
        raise DimensionError(f"index {idx!r} invalid for shape {list(src)}") from exc
    basic = _is_basic(idx)

    def vjp(g):
        z = np.zeros(src)
        if basic:
            z[idx] = g
        else:
            np.add.at(z, idx, g)
        return (z,)

    return _emit("getitem", np.array(out), (x,), vjp)


def slice_axis(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    idx = [slice(None)] * x.ndim
    idx[axis] = slice(start, stop)
    return getitem(x, tuple(idx))


def take(x: Tensor, indices, axis: int = 0) -> Tensor:
    indices = np.asarray(indices, dtype=np.int64)
    idx = [slice(None)] * x.ndim
    idx[axis] = indices
    return getitem(x, tuple(idx))


# ---------------------------------------------------------------------------
# fused numerics


def softmax_lastdim(x: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis with max subtraction.

    ``mask`` is a constant boolean array broadcastable to ``x``; False entries get
    zero probability. Every slice needs at least one True entry.
    """
    if x.shape[-1] < 1:
        raise DimensionError("softmax over an empty axis")
    if not np.all(np.isfinite(x.data)):
        raise NumericError("softmax input contains non-finite values")
    z = x.data if mask is None else np.where(mask, x.data, -np.inf)
    s = z - z.max(axis=-1, keepdims=True)
    np.exp(s, out=s)
    s /= s.sum(axis=-1, keepdims=True)
    return _emit("softmax", s, (x,),
                 lambda g: (s * (g - (g * s).sum(axis=-1, keepdims=True)),))


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError(
            f"layer_norm: input {list(x.shape)} with gain {list(gain.shape)}, bias {list(bias.shape)}"
        )
    if eps <= 0:
        raise ContractError("layer_norm eps must be positive")
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    gd = gain.data
    out = xhat * gd + bias.data

    def vjp(g):
        dxhat = g * gd
        dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        flat = g.reshape(-1, d)
        return dx, (flat * xhat.reshape(-1, d)).sum(axis=0), flat.sum(axis=0)

    return _emit("layer_norm", out, (x, gain, bias), vjp)


def cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean negative log-likelihood of integer ``targets`` under ``softmax(logits)``."""
    if logits.ndim != 2:
        raise DimensionError(f"cross_entropy expects [b, c] logits, got {list(logits.shape)}")
    b, c = logits.shape
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    if targets.shape[0] != b:
        raise DimensionError(f"cross_entropy: {b} rows but {targets.shape[0]} targets")
    if b == 0:
        raise ContractError("cross_entropy over an empty batch")
    if np.any(targets < 0) or np.any(targets >= c):
        raise IndexError(f"target index out of range [0, {c})")
    z = logits.data
    if not np.all(np.isfinite(z)):
        raise NumericError("cross_entropy logits contain non-finite values")
    m = z.max(axis=1, keepdims=True)
    e = np.exp(z - m)
    se = e.sum(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(se[:, 0])
    rows = np.arange(b)
    loss = np.mean(lse - z[rows, targets])

    def vjp(g):
        p = e / se
        p[rows, targets] -= 1.0
        return (p * (g / b),)

    return _emit("cross_entropy", np.asarray(loss), (logits,), vjp)
