"""Elementwise, reduction and shape ops with reverse-mode rules."""

from __future__ import annotations

import numpy as np

from . import _kernels
from .tensor import ShapeError, Tensor, as_tensor, make_node


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _operands(a, b):
    if not isinstance(a, Tensor) and isinstance(b, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    elif not isinstance(b, Tensor) and isinstance(a, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    a, b = as_tensor(a), as_tensor(b)
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeError(f"cannot broadcast {a.shape} with {b.shape}") from exc
    return a, b


def add(a, b) -> Tensor:
    a, b = _operands(a, b)

    def bw(g, needs):
        return (_unbroadcast(g, a.shape) if needs[0] else None,
                _unbroadcast(g, b.shape) if needs[1] else None)

    return make_node(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = _operands(a, b)

    def bw(g, needs):
        return (_unbroadcast(g, a.shape) if needs[0] else None,
                _unbroadcast(-g, b.shape) if needs[1] else None)

    return make_node(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a, b = _operands(a, b)

    def bw(g, needs):
        return (_unbroadcast(g * b.data, a.shape) if needs[0] else None,
                _unbroadcast(g * a.data, b.shape) if needs[1] else None)

    return make_node(a.data * b.data, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a, b = _operands(a, b)

    def bw(g, needs):
        ga = _unbroadcast(g / b.data, a.shape) if needs[0] else None
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape) if needs[1] else None
        return ga, gb

    return make_node(a.data / b.data, (a, b), bw, "div")


def _logistic(v: np.ndarray) -> np.ndarray:
    # numpy's exp is SIMD-vectorized; overflow of exp(-v) to inf correctly yields 0
    with np.errstate(over="ignore"):
        e = np.exp(-v)
    e += 1
    return np.reciprocal(e, out=e)


def sigmoid(x: Tensor) -> Tensor:
    s = _logistic(x.data)

    def bw(g, needs):
        return (g * s * (1 - s),)

    return make_node(s, (x,), bw, "sigmoid")


def silu(x: Tensor) -> Tensor:
    xd = np.ascontiguousarray(x.data)
    s = _logistic(xd)
    out = xd * s

    def bw(g, needs):
        gx = np.empty_like(xd)
        _kernels.silu_backward(np.ascontiguousarray(g).reshape(-1), xd.reshape(-1), s.reshape(-1), gx.reshape(-1))
        return (gx,)

    return make_node(out, (x,), bw, "silu")


def leaky_relu(x: Tensor, slope: float = 0.01) -> Tensor:
    pos = x.data > 0
    out = np.where(pos, x.data, x.data * slope).astype(x.dtype, copy=False)

    def bw(g, needs):
        return (np.where(pos, g, g * slope).astype(g.dtype, copy=False),)

    return make_node(out, (x,), bw, "leaky_relu")


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)

    def bw(g, needs):
        return (g * out,)

    return make_node(out, (x,), bw, "exp")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the last two axes (numpy semantics, ndim >= 2)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs ndim >= 2, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner extents differ: {a.shape[-1]} vs {b.shape[-2]}")
    out = np.matmul(a.data, b.data)

    def bw(g, needs):
        ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape) if needs[0] else None
        gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape) if needs[1] else None
        return ga, gb

    return make_node(out, (a, b), bw, "matmul")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"softmax axis {axis} out of range for shape {x.shape}")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def bw(g, needs):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return make_node(s, (x,), bw, "softmax")


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(int(n) for n in shape)
    try:
        out = x.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"cannot reshape {x.shape} into {shape}") from exc
    src = x.shape

    def bw(g, needs):
        return (g.reshape(src),)

    return make_node(out, (x,), bw, "reshape")


def permute(x: Tensor, axes) -> Tensor:
    axes = tuple(int(a) for a in axes)
    if sorted(a % x.ndim for a in axes) != list(range(x.ndim)):
        raise ShapeError(f"permute axes {axes} invalid for ndim {x.ndim}")
    inv = np.argsort([a % x.ndim for a in axes])

    def bw(g, needs):
        return (np.transpose(g, inv),)

    return make_node(np.transpose(x.data, axes), (x,), bw, "permute")


def concat(xs, axis: int = 0) -> Tensor:
    xs = [as_tensor(t) for t in xs]
    if not xs:
        raise ShapeError("concat of an empty sequence")
    nd = xs[0].ndim
    ax = axis % nd
    for t in xs[1:]:
        if t.ndim != nd or any(t.shape[i] != xs[0].shape[i] for i in range(nd) if i != ax):
            raise ShapeError(f"concat along axis {axis}: {xs[0].shape} vs {t.shape}")
    bounds = np.cumsum([0] + [t.shape[ax] for t in xs])

    def bw(g, needs):
        out = []
        for i, need in enumerate(needs):
            if not need:
                out.append(None)
                continue
            idx = [slice(None)] * nd
            idx[ax] = slice(bounds[i], bounds[i + 1])
            out.append(g[tuple(idx)])
        return tuple(out)

    return make_node(np.concatenate([t.data for t in xs], axis=ax), tuple(xs), bw, "concat")


def stack(xs, axis: int = 0) -> Tensor:
    xs = [as_tensor(t) for t in xs]
    if not xs:
        raise ShapeError("stack of an empty sequence")
    for t in xs[1:]:
        if t.shape != xs[0].shape:
            raise ShapeError(f"stack needs equal shapes: {xs[0].shape} vs {t.shape}")
    ax = axis % (xs[0].ndim + 1)

    def bw(g, needs):
        return tuple(np.take(g, i, axis=ax) if need else None for i, need in enumerate(needs))

    return make_node(np.stack([t.data for t in xs], axis=ax), tuple(xs), bw, "stack")


def slice_axis(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    ax = axis % x.ndim
    if not 0 <= start < stop <= x.shape[ax]:
        raise ShapeError(f"slice [{start}:{stop}] out of range for axis {axis} of extent {x.shape[ax]}")
    idx = [slice(None)] * x.ndim
    idx[ax] = slice(start, stop)
    return getitem(x, tuple(idx))


def getitem(x: Tensor, index) -> Tensor:
    out = x.data[index]
    if not isinstance(out, np.ndarray):
        out = np.asarray(out, dtype=x.dtype)

    def bw(g, needs):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g) if _is_advanced(index) else _assign_add(full, index, g)
        return (full,)

    return make_node(np.ascontiguousarray(out), (x,), bw, "getitem")


def _is_advanced(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def _assign_add(full, index, g):
    full[index] += g


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = np.sum(x.data, axis=axis, keepdims=keepdims)
    src = x.shape

    def bw(g, needs):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, src).astype(x.dtype, copy=True),)

    return make_node(np.asarray(out, dtype=x.dtype), (x,), bw, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = x.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([x.shape[a] for a in axes]))
    out = np.mean(x.data, axis=axis, keepdims=keepdims)
    src = x.shape

    def bw(g, needs):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / n, src).astype(x.dtype, copy=True),)

    return make_node(np.asarray(out, dtype=x.dtype), (x,), bw, "mean")


def mse(a: Tensor, b: Tensor) -> Tensor:
    """Mean squared error over all elements, returned as a scalar tensor."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"mse operands differ in shape: {a.shape} vs {b.shape}")
    diff = a.data - b.data
    n = diff.size
    out = np.asarray(np.mean(diff * diff), dtype=a.dtype)

    def bw(g, needs):
        base = diff * (2.0 * g / n)
        return (base if needs[0] else None, -base if needs[1] else None)

    return make_node(out, (a, b), bw, "mse")
