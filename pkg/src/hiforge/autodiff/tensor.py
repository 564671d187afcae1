"""Reverse-mode automatic differentiation on float64 numpy arrays.

A ``Tensor`` wraps an ndarray plus an optional gradient. Every operation
records its parents and a backward closure together with a monotonically
increasing sequence number, so ``backward`` can replay closures in exact
reverse execution order. Gradients accumulate additively; call
``zero_grad`` (or rebuild leaves) between unrelated backward passes.

All results are checked for NaN/Inf and non-finite values raise
``NumericalError`` instead of propagating silently.
"""

from __future__ import annotations

import itertools

import numpy as np

from ..errors import DimensionError, NumericalError, UsageError

_SEQ = itertools.count()
_GRAD_ENABLED = True


class no_grad:
    """Context manager that disables graph recording inside its block."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


def _check_finite(data, op):
    if not np.all(np.isfinite(data)):
        raise NumericalError(f"non-finite value produced by op '{op}'")


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_seq")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        _check_finite(self.data, "leaf")
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None
        self._seq = next(_SEQ)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def item(self):
        if self.data.size != 1:
            raise UsageError("item() requires a single-element tensor")
        return float(self.data.reshape(()))

    def accumulate_grad(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Run reverse-mode accumulation from this scalar.

        Visits recorded operations in exact reverse execution order, so
        repeated calls without resetting gradients accumulate additively.
        """
        if self.data.size != 1:
            raise UsageError("backward() requires a scalar loss tensor")
        nodes = []
        seen = set()
        stack = [self]
        while stack:
            t = stack.pop()
            if id(t) in seen:
                continue
            seen.add(id(t))
            nodes.append(t)
            stack.extend(t._parents)
        nodes.sort(key=lambda t: t._seq, reverse=True)
        self.accumulate_grad(np.ones_like(self.data))
        for t in nodes:
            if t._backward is not None and t.grad is not None:
                t._backward(t.grad)

    # -- operator sugar -------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, -as_tensor(other))

    def __rsub__(self, other):
        return add(as_tensor(other), -self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(as_tensor(other), self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return take(self, key)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward, op):
    """Build an op result; prunes the graph when gradients are off."""
    _check_finite(data, op)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._seq = next(_SEQ)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(g, shape):
    """Sum gradient over axes that numpy broadcasting expanded."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- elementwise arithmetic ---------------------------------------------


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g, b.data.shape))

    return _make(data, (a, b), backward, "add")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g * a.data, b.data.shape))

    return _make(data, (a, b), backward, "mul")


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    data = a.data / b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g / b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _make(data, (a, b), backward, "div")


def power(a, p):
    a = as_tensor(a)
    p = float(p)
    data = a.data**p

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * p * a.data ** (p - 1.0))

    return _make(data, (a,), backward, "power")


def exp(a):
    a = as_tensor(a)
    data = np.exp(a.data)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * data)

    return _make(data, (a,), backward, "exp")


def log(a):
    a = as_tensor(a)
    data = np.log(a.data)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g / a.data)

    return _make(data, (a,), backward, "log")


def sqrt(a):
    a = as_tensor(a)
    data = np.sqrt(a.data)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * 0.5 / data)

    return _make(data, (a,), backward, "sqrt")


# -- reductions ----------------------------------------------------------


def tensor_sum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if not a.requires_grad:
            return
        if axis is None:
            a.accumulate_grad(np.broadcast_to(g, a.data.shape).copy())
            return
        axes = axis if isinstance(axis, tuple) else (axis,)
        if not keepdims:
            g = np.expand_dims(g, [ax % a.data.ndim for ax in axes])
        a.accumulate_grad(np.broadcast_to(g, a.data.shape).copy())

    return _make(np.asarray(data), (a,), backward, "sum")


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    if axis is None:
        count = a.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([a.data.shape[ax] for ax in axes]))
    return mul(tensor_sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


# -- shape manipulation --------------------------------------------------


def reshape(a, shape):
    a = as_tensor(a)
    data = a.data.reshape(shape)
    orig = a.data.shape

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g.reshape(orig))

    return _make(data, (a,), backward, "reshape")


def transpose(a, axes):
    a = as_tensor(a)
    data = np.transpose(a.data, axes).copy()
    inverse = np.argsort(axes)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(np.transpose(g, inverse))

    return _make(data, (a,), backward, "transpose")


def take(a, key):
    """Basic (slice/integer) indexing with scatter-add backward."""
    a = as_tensor(a)
    data = a.data[key].copy()

    def backward(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[key] += g
            a.accumulate_grad(full)

    return _make(data, (a,), backward, "take")


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]

    def backward(g):
        offset = 0
        for t, s in zip(tensors, sizes):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(offset, offset + s)
                t.accumulate_grad(g[tuple(idx)])
            offset += s

    return _make(data, tuple(tensors), backward, "concat")


def matmul(a, b):
    """Batched matrix product with broadcasting over leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise DimensionError("matmul requires tensors with at least 2 axes")
    data = np.matmul(a.data, b.data)

    def backward(g):
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            a.accumulate_grad(_unbroadcast(ga, a.data.shape))
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
            b.accumulate_grad(_unbroadcast(gb, b.data.shape))

    return _make(data, (a, b), backward, "matmul")


# -- one-dimensional signal layout ops (last axis is time) ---------------


def pad1d(a, left, right):
    """Zero padding on the last axis."""
    a = as_tensor(a)
    if left < 0 or right < 0:
        raise DimensionError("pad1d amounts must be non-negative")
    width = [(0, 0)] * (a.data.ndim - 1) + [(left, right)]
    data = np.pad(a.data, width)
    length = a.data.shape[-1]

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g[..., left : left + length])

    return _make(data, (a,), backward, "pad1d")


def unfold1d(a, size, stride):
    """Sliding windows over the last axis: (..., L) -> (..., N, size)."""
    a = as_tensor(a)
    length = a.data.shape[-1]
    if size < 1 or stride < 1:
        raise DimensionError("unfold1d size and stride must be >= 1")
    if size > length:
        raise DimensionError(
            f"unfold1d window size {size} exceeds last-axis length {length}"
        )
    windows = np.lib.stride_tricks.sliding_window_view(a.data, size, axis=-1)
    data = windows[..., ::stride, :].copy()
    count = data.shape[-2]

    def backward(g):
        if not a.requires_grad:
            return
        full = np.zeros_like(a.data)
        for j in range(size):
            full[..., j : j + (count - 1) * stride + 1 : stride] += g[..., :, j]
        a.accumulate_grad(full)

    return _make(data, (a,), backward, "unfold1d")


def dilate1d(a, stride):
    """Insert stride-1 zeros between samples on the last axis."""
    a = as_tensor(a)
    if stride < 1:
        raise DimensionError("dilate1d stride must be >= 1")
    if stride == 1:
        return a
    length = a.data.shape[-1]
    out_shape = a.data.shape[:-1] + ((length - 1) * stride + 1,)
    data = np.zeros(out_shape)
    data[..., ::stride] = a.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g[..., ::stride].copy())

    return _make(data, (a,), backward, "dilate1d")
