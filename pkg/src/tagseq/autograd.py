"""Dense reverse-mode automatic differentiation on top of numpy.

The engine is deliberately small: a :class:`Tensor` wraps a float64 array and,
when produced by a differentiable op while gradient recording is enabled, keeps
references to its parents plus a closure mapping the output gradient to parent
gradients. :func:`backward` walks that graph once in reverse topological order.

Supported ops: ``matmul``, ``add``, ``mul``, ``concat``, ``take`` (basic
slicing), ``sigmoid``, ``tanh``, ``relu``, ``softmax``, ``layer_norm``,
``embedding``, ``cross_entropy``. ``reshape``, ``transpose`` and ``total`` are
pure data-movement / reduction helpers needed to express multi-head attention
and scalar test losses.
"""

from __future__ import annotations

import contextlib
import itertools
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, DimensionError

_ids = itertools.count()
_grad_enabled = True

MASK_VALUE = -1e9


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def is_grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """A float64 array with an optional gradient slot and graph links."""

    __slots__ = ("data", "grad", "requires_grad", "node_id", "name", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.node_id = next(_ids)
        self.name = name
        self.op = "leaf"
        self._parents: tuple = ()
        self._backward = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op}{label})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(_as_tensor(other), -1.0))

    def __rsub__(self, other):
        return add(_as_tensor(other), mul(self, -1.0))

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return take(self, key)


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, parents: tuple, backward: Callable, op: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.node_id = next(_ids)
    out.name = None
    out.op = op
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# --------------------------------------------------------------------- ops


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        data = a.data + b.data
    except ValueError:
        raise DimensionError(f"add: cannot broadcast shapes {a.shape} and {b.shape}") from None

    def backward(g):
        return (
            _unbroadcast(g, a.shape) if a.requires_grad else None,
            _unbroadcast(g, b.shape) if b.requires_grad else None,
        )

    return _result(data, (a, b), backward, "add")


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        data = a.data * b.data
    except ValueError:
        raise DimensionError(f"mul: cannot broadcast shapes {a.shape} and {b.shape}") from None

    def backward(g):
        return (
            _unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
            _unbroadcast(g * a.data, b.shape) if b.requires_grad else None,
        )

    return _result(data, (a, b), backward, "mul")


def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes, broadcasting leading axes."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    try:
        data = np.matmul(a.data, b.data)
    except ValueError:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}") from None

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return _result(data, (a, b), backward, "matmul")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = tuple(_as_tensor(t) for t in tensors)
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise DimensionError(f"concat: incompatible shapes {shapes} along axis {axis}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        parts = np.split(g, bounds, axis=axis)
        return tuple(p if t.requires_grad else None for p, t in zip(parts, tensors))

    return _result(data, tensors, backward, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    """Stack equally shaped tensors along a new axis (reshape + concat)."""
    expanded = []
    for t in tensors:
        shape = list(t.shape)
        shape.insert(axis if axis >= 0 else len(shape) + axis + 1, 1)
        expanded.append(reshape(t, tuple(shape)))
    return concat(expanded, axis=axis)


def take(x: Tensor, key) -> Tensor:
    """Basic (view) indexing: ints and slices only."""
    data = x.data[key]

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[key] += g
        return (gx,)

    return _result(data, (x,), backward, "slice")


def reshape(x: Tensor, shape: tuple) -> Tensor:
    data = x.data.reshape(shape)

    def backward(g):
        return (g.reshape(x.shape),)

    return _result(data, (x,), backward, "reshape")


def transpose(x: Tensor, axes: tuple) -> Tensor:
    data = np.transpose(x.data, axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        return (np.transpose(g, inverse),)

    return _result(data, (x,), backward, "transpose")


def total(x: Tensor) -> Tensor:
    """Sum of all elements, as a 0-d tensor."""
    data = np.asarray(x.data.sum())

    def backward(g):
        return (np.broadcast_to(g, x.shape).copy(),)

    return _result(data, (x,), backward, "sum")


def sigmoid(x: Tensor) -> Tensor:
    y = 0.5 * (1.0 + np.tanh(0.5 * x.data))

    def backward(g):
        return (g * y * (1.0 - y),)

    return _result(y, (x,), backward, "sigmoid")


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)

    def backward(g):
        return (g * (1.0 - y * y),)

    return _result(y, (x,), backward, "tanh")


def relu(x: Tensor) -> Tensor:
    on = x.data > 0
    y = np.where(on, x.data, 0.0)

    def backward(g):
        return (g * on,)

    return _result(y, (x,), backward, "relu")


def softmax_array(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax_array(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - x.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    y = softmax_array(x.data, axis)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _result(y, (x,), backward, "softmax")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then scale and shift."""
    n = x.shape[-1]
    if n < 2:
        raise ContractError(f"layer_norm needs a normalised axis of length >= 2, got {n}")
    gain, bias = _as_tensor(gain), _as_tensor(bias)
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv_std
    data = xhat * gain.data + bias.data

    def backward(g):
        gx = ggain = gbias = None
        if x.requires_grad:
            gh = g * gain.data
            gx = inv_std * (
                gh
                - gh.mean(axis=-1, keepdims=True)
                - xhat * (gh * xhat).mean(axis=-1, keepdims=True)
            )
        if gain.requires_grad:
            ggain = _unbroadcast(g * xhat, gain.shape)
        if bias.requires_grad:
            gbias = _unbroadcast(g, bias.shape)
        return gx, ggain, gbias

    return _result(data, (x, gain, bias), backward, "layer_norm")


def embedding(table: Tensor, ids) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise DimensionError(f"embedding: ids outside [0, {table.shape[0]})")
    data = table.data[ids]

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (gt,)

    return _result(data, (table,), backward, "embedding")


def cross_entropy(logits: Tensor, targets, weights=None) -> Tensor:
    """Weighted mean negative log-likelihood of integer targets.

    ``logits`` has shape (..., V); ``targets`` and ``weights`` have shape (...).
    The mean is taken over the total weight, so zero-weight positions (padding)
    contribute nothing.
    """
    targets = np.asarray(targets, dtype=np.int64)
    if logits.shape[:-1] != targets.shape:
        raise DimensionError(f"cross_entropy: logits {logits.shape} vs targets {targets.shape}")
    w = np.ones(targets.shape) if weights is None else np.asarray(weights, dtype=np.float64)
    denom = w.sum()
    if denom <= 0:
        raise ContractError("cross_entropy: total target weight is zero")
    logp = log_softmax_array(logits.data)
    picked = np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
    data = np.asarray(-(w * picked).sum() / denom)

    def backward(g):
        probs = np.exp(logp)
        np.put_along_axis(
            probs, targets[..., None], np.take_along_axis(probs, targets[..., None], -1) - 1.0, -1
        )
        return (probs * (w / denom)[..., None] * g,)

    return _result(data, (logits,), backward, "cross_entropy")


# ---------------------------------------------------------------- backward


def _topological_order(root: Tensor) -> list:
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor, params: Iterable[Tensor] | None = None) -> dict:
    """Back-propagate from a scalar ``loss``.

    Gradients accumulate into the ``.grad`` slot of every reachable leaf that
    requires grad. Members of ``params`` that the loss does not reach receive a
    zero gradient. Returns ``{node_id: grad}`` for all leaves touched.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    pending = {id(loss): np.ones_like(loss.data)}
    leaves = {}
    if loss.requires_grad:
        for node in reversed(_topological_order(loss)):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                leaves[node.node_id] = node.grad
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                pending[key] = pending[key] + pg if key in pending else pg
    for p in params or ():
        if p.grad is None:
            p.grad = np.zeros_like(p.data)
        leaves.setdefault(p.node_id, p.grad)
    return leaves


# -------------------------------------------------------------- grad check


def grad_check(
    build: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-5,
    max_entries: int | None = None,
    seed: int = 0,
) -> float:
    """Compare analytic gradients to central differences.

    ``build`` must deterministically recompute the scalar loss from the current
    values of ``params``. For each parameter the relative error is
    ``|a - n| / max(|a|, |n|, 1e-12)`` with ``|.|`` the Euclidean norm over the
    checked entries; the maximum over parameters is returned. ``max_entries``
    limits the number of randomly chosen coordinates checked per parameter.
    """
    for p in params:
        p.grad = None
    backward(build(), params)
    analytic = [p.grad.copy() for p in params]
    rng = np.random.default_rng(seed)
    worst = 0.0
    for p, a in zip(params, analytic):
        if not p.data.flags.c_contiguous:
            p.data = np.ascontiguousarray(p.data)
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        numeric = np.empty(idx.size)
        for j, i in enumerate(idx):
            orig = flat[i]
            with no_grad():
                flat[i] = orig + eps
                plus = build().item()
                flat[i] = orig - eps
                minus = build().item()
            flat[i] = orig
            numeric[j] = (plus - minus) / (2.0 * eps)
        a_sel = a.reshape(-1)[idx]
        err = np.linalg.norm(a_sel - numeric) / max(
            np.linalg.norm(a_sel), np.linalg.norm(numeric), 1e-12
        )
        worst = max(worst, float(err))
    for p in params:
        p.grad = None
    return worst
