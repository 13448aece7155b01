"""Reverse-mode differentiation over numpy arrays.

A :class:`Var` wraps an array and remembers how it was produced. The module-level
primitives (``exp``, ``log``, ``relu``, ...) accept either Vars or plain arrays;
with plain arrays they simply evaluate, so model code can be written once and
used for both training (with gradients) and prediction (without).

Supported primitives: + - * / (with broadcasting), matmul, exp, log, sigmoid,
softplus, relu, clip, sum, logsumexp (optionally masked), slicing and reshape.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .errors import NonFiniteError


def _check(value, op):
    if not np.all(np.isfinite(value)):
        raise NonFiniteError(op)
    return value


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (undoing numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    ndim_extra = grad.ndim - len(shape)
    if ndim_extra > 0:
        grad = grad.sum(axis=tuple(range(ndim_extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Var:
    """Array node in a differentiation graph."""

    __slots__ = ("value", "parents", "op")
    __array_ufunc__ = None  # make ndarray <op> Var dispatch to Var's reflected methods

    def __init__(self, value, parents=(), op="leaf"):
        self.value = np.asarray(value, dtype=float)
        self.parents = parents  # tuple of (Var, vjp) pairs
        self.op = op

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"Var(op={self.op}, shape={self.value.shape})"

    def __float__(self):
        return float(self.value)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(other))

    def __rsub__(self, other):
        return add(other, neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)


def _val(x):
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=float)


def _node(value, op, *pairs):
    """Build a Var from parent/vjp pairs, dropping non-Var parents."""
    parents = tuple((p, f) for p, f in pairs if isinstance(p, Var))
    return Var(_check(value, op), parents, op)


def _any_var(*xs):
    return any(isinstance(x, Var) for x in xs)


# ---------------------------------------------------------------------------
# primitives


def add(a, b):
    av, bv = _val(a), _val(b)
    out = av + bv
    if not _any_var(a, b):
        return out
    return _node(
        out,
        "add",
        (a, lambda g: _unbroadcast(g, av.shape)),
        (b, lambda g: _unbroadcast(g, bv.shape)),
    )


def neg(a):
    if not isinstance(a, Var):
        return -np.asarray(a, dtype=float)
    return _node(-a.value, "neg", (a, lambda g: -g))


def mul(a, b):
    av, bv = _val(a), _val(b)
    out = av * bv
    if not _any_var(a, b):
        return out
    return _node(
        out,
        "mul",
        (a, lambda g: _unbroadcast(g * bv, av.shape)),
        (b, lambda g: _unbroadcast(g * av, bv.shape)),
    )


def div(a, b):
    av, bv = _val(a), _val(b)
    out = av / bv
    if not _any_var(a, b):
        return out
    return _node(
        out,
        "div",
        (a, lambda g: _unbroadcast(g / bv, av.shape)),
        (b, lambda g: _unbroadcast(-g * out / bv, bv.shape)),
    )


def matmul(a, b):
    av, bv = _val(a), _val(b)
    out = av @ bv
    if not _any_var(a, b):
        return out

    def grad_a(g):
        if bv.ndim == 1:
            return _unbroadcast(np.multiply.outer(g, bv), av.shape)
        return _unbroadcast(g @ np.swapaxes(bv, -1, -2), av.shape)

    def grad_b(g):
        if av.ndim == 1:
            return _unbroadcast(np.multiply.outer(av, g), bv.shape)
        if bv.ndim == 1:
            return (g[..., None] * av).reshape(-1, bv.shape[0]).sum(axis=0)
        return _unbroadcast(np.swapaxes(av, -1, -2) @ g, bv.shape)

    return _node(out, "matmul", (a, grad_a), (b, grad_b))


def exp(a):
    with np.errstate(over="ignore"):
        out = np.exp(_val(a))
    if not isinstance(a, Var):
        return _check(out, "exp")
    return _node(out, "exp", (a, lambda g: g * out))


def log(a):
    av = _val(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(av)
    if not isinstance(a, Var):
        return _check(out, "log")
    return _node(out, "log", (a, lambda g: g / av))


def sigmoid(a):
    av = _val(a)
    out = np.exp(-np.logaddexp(0.0, -av))
    if not isinstance(a, Var):
        return out
    return _node(out, "sigmoid", (a, lambda g: g * out * (1.0 - out)))


def softplus(a):
    av = _val(a)
    out = np.logaddexp(0.0, av)
    if not isinstance(a, Var):
        return out
    return _node(out, "softplus", (a, lambda g: g * np.exp(-np.logaddexp(0.0, -av))))


def relu(a):
    """max(a, 0); the derivative at exactly 0 is taken to be 0."""
    av = _val(a)
    out = np.maximum(av, 0.0)
    if not isinstance(a, Var):
        return out
    mask = av > 0
    return _node(out, "relu", (a, lambda g: g * mask))


def clip(a, lo, hi):
    av = _val(a)
    out = np.clip(av, lo, hi)
    if not isinstance(a, Var):
        return out
    mask = (av >= lo) & (av <= hi)
    return _node(out, "clip", (a, lambda g: g * mask))


def sum_(a, axis=None, keepdims=False):
    av = _val(a)
    out = np.sum(av, axis=axis, keepdims=keepdims)
    if not isinstance(a, Var):
        return out

    def vjp(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, av.shape)

    return _node(out, "sum", (a, vjp))


def logsumexp(a, axis=-1, mask=None):
    """log Σ exp(a) along ``axis``; entries where ``mask`` is False are excluded.

    Every reduced slice must keep at least one entry. The maximum is shifted out
    before exponentiating.
    """
    av = _val(a)
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), av.shape)
        masked = np.where(mask, av, -np.inf)
    else:
        masked = av
    shift = np.max(masked, axis=axis, keepdims=True)
    if not np.all(np.isfinite(shift)):
        raise NonFiniteError("logsumexp")
    with np.errstate(under="ignore"):
        e = np.exp(masked - shift)
    total = e.sum(axis=axis, keepdims=True)
    out_keep = shift + np.log(total)
    out = np.squeeze(out_keep, axis=axis)
    if not isinstance(a, Var):
        return _check(out, "logsumexp")
    softmax = e / total

    def vjp(g):
        return np.expand_dims(g, axis) * softmax

    return _node(out, "logsumexp", (a, vjp))


def getitem(a, index):
    av = _val(a)
    out = av[index]
    if not isinstance(a, Var):
        return out

    parts = index if isinstance(index, tuple) else (index,)
    basic = all(isinstance(p, (slice, int, type(Ellipsis))) or p is None for p in parts)

    def vjp(g):
        full = np.zeros_like(av)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return full

    return _node(np.array(out), "getitem", (a, vjp))


def reshape(a, shape):
    av = _val(a)
    out = av.reshape(shape)
    if not isinstance(a, Var):
        return out
    return _node(out, "reshape", (a, lambda g: g.reshape(av.shape)))


def transpose(a):
    """Transpose of a 2-D operand."""
    av = _val(a)
    if not isinstance(a, Var):
        return av.T
    return _node(av.T.copy(), "transpose", (a, lambda g: g.T))


def value(x):
    """Plain numpy value of a Var or array-like."""
    return _val(x)


def backward(out: Var) -> dict[int, np.ndarray]:
    """Gradients of scalar ``out`` with respect to every node, keyed by ``id``."""
    order = []
    seen = set()
    stack = [(out, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    grads = {id(out): np.ones_like(out.value)}
    for node in reversed(order):
        g = grads.pop(id(node), None) if node.parents else grads.get(id(node))
        if g is None:
            continue
        for parent, vjp in node.parents:
            contrib = vjp(g)
            pid = id(parent)
            if pid in grads:
                grads[pid] = grads[pid] + contrib
            else:
                grads[pid] = np.array(contrib, dtype=float)
    return grads


# ---------------------------------------------------------------------------
# parameter vectors


@dataclass(frozen=True, eq=False)
class ParamVector:
    """Flat parameter vector with named, shaped, contiguous slices."""

    values: np.ndarray
    layout: dict  # name -> (offset, shape)

    @classmethod
    def from_arrays(cls, arrays: Mapping[str, np.ndarray]) -> "ParamVector":
        layout, chunks, offset = {}, [], 0
        for name, arr in arrays.items():
            arr = np.asarray(arr, dtype=float)
            layout[name] = (offset, arr.shape)
            chunks.append(arr.reshape(-1))
            offset += arr.size
        values = np.concatenate(chunks) if chunks else np.zeros(0)
        return cls(values, layout)

    def __len__(self):
        return self.values.size

    def names(self):
        return list(self.layout)

    def __getitem__(self, name) -> np.ndarray:
        offset, shape = self.layout[name]
        size = int(np.prod(shape, dtype=int))
        return self.values[offset : offset + size].reshape(shape)

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: self[name].copy() for name in self.layout}

    def with_values(self, values) -> "ParamVector":
        values = np.asarray(values, dtype=float)
        if values.shape != self.values.shape:
            raise ValueError("parameter vector length changed")
        return ParamVector(values, self.layout)


@dataclass(frozen=True, eq=False)
class GradResult:
    value: float
    grad: np.ndarray


def _leaves(params: ParamVector) -> dict[str, Var]:
    return {name: Var(params[name].copy()) for name in params.layout}


def evaluate(loss_fn: Callable, params: ParamVector) -> float:
    return float(_val(loss_fn({name: params[name].copy() for name in params.layout})))


def grad(loss_fn: Callable, params: ParamVector) -> GradResult:
    """Value and gradient of ``loss_fn`` at ``params``.

    ``loss_fn`` receives a mapping from slice name to a Var of that slice's shape
    and must return a scalar Var.
    """
    leaves = _leaves(params)
    out = loss_fn(leaves)
    flat = np.zeros_like(params.values)
    if not isinstance(out, Var):
        return GradResult(float(out), flat)
    if out.value.size != 1:
        raise ValueError("loss must be a scalar")
    grads = backward(out)
    for name, leaf in leaves.items():
        g = grads.get(id(leaf))
        if g is not None:
            offset, _ = params.layout[name]
            flat[offset : offset + g.size] = g.reshape(-1)
    return GradResult(float(out.value), flat)


def grad_check(loss_fn: Callable, params: ParamVector, step: float = 1e-4, grad_fn=None) -> float:
    """Largest componentwise relative error between analytic and central-difference gradients.

    The analytic gradient comes from :func:`grad` unless ``grad_fn(params)`` is
    supplied. Relative error uses ``max(|analytic|, |numeric|, 1e-8)`` as denominator.
    """
    analytic = grad(loss_fn, params).grad if grad_fn is None else np.asarray(grad_fn(params), dtype=float)
    base = params.values
    numeric = np.empty_like(base)
    for i in range(base.size):
        plus = base.copy()
        plus[i] += step
        minus = base.copy()
        minus[i] -= step
        numeric[i] = (evaluate(loss_fn, params.with_values(plus)) - evaluate(loss_fn, params.with_values(minus))) / (
            2 * step
        )
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom)) if base.size else 0.0
