"""Differentiable op registry.

Each op computes its forward value with numpy and returns a closure for the
vector-Jacobian product.  Broadcasting follows numpy; gradients are summed
back to each parent's shape.
"""

from __future__ import annotations

import builtins

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import ShapeError, Tensor, as_tensor, current_scope, make

NEG_INF_FILL = -1e30

REGISTRY: dict[str, object] = {}


def register(fn):
    REGISTRY[fn.__name__] = fn
    return fn


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _binary(op, a, b, fn):
    a, b = as_tensor(a), as_tensor(b)
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, current_scope(), [a.shape, b.shape]) from None
    return a, b, fn(a.data, b.data)


# ----------------------------------------------------------------- elementwise

@register
def add(a, b) -> Tensor:
    a, b, out = _binary("add", a, b, np.add)
    return make(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


@register
def sub(a, b) -> Tensor:
    a, b, out = _binary("sub", a, b, np.subtract)
    return make(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


@register
def mul(a, b) -> Tensor:
    a, b, out = _binary("mul", a, b, np.multiply)
    return make(
        out,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        "mul",
    )


@register
def div(a, b) -> Tensor:
    a, b, out = _binary("div", a, b, np.divide)

    def back(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None
        return ga, gb

    return make(out, (a, b), back, "div")


@register
def neg(x) -> Tensor:
    x = as_tensor(x)
    return make(-x.data, (x,), lambda g: (-g,), "neg")


@register
def exp(x) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)
    return make(out, (x,), lambda g: (g * out,), "exp")


@register
def log(x) -> Tensor:
    x = as_tensor(x)
    return make(np.log(x.data), (x,), lambda g: (g / x.data,), "log")


@register
def sqrt(x) -> Tensor:
    x = as_tensor(x)
    out = np.sqrt(x.data)
    return make(out, (x,), lambda g: (g * 0.5 / out,), "sqrt")


@register
def square(x) -> Tensor:
    x = as_tensor(x)
    return make(x.data * x.data, (x,), lambda g: (2.0 * g * x.data,), "square")


@register
def tanh(x) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.data)
    return make(out, (x,), lambda g: (g * (1.0 - out * out),), "tanh")


def _sigmoid(v: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return out


@register
def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    out = _sigmoid(x.data)
    return make(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


@register
def relu(x) -> Tensor:
    x = as_tensor(x)
    pos = x.data > 0
    return make(np.where(pos, x.data, 0.0), (x,), lambda g: (g * pos,), "relu")


@register
def swish(x) -> Tensor:
    x = as_tensor(x)
    s = _sigmoid(x.data)
    out = x.data * s
    return make(out, (x,), lambda g: (g * (s + out * (1.0 - s)),), "swish")


@register
def masked_fill(x, mask: np.ndarray, value: float = NEG_INF_FILL) -> Tensor:
    """Replace entries where ``mask`` is True by a constant; no gradient flows there."""
    x = as_tensor(x)
    mask = np.asarray(mask, dtype=bool)
    try:
        out = np.where(mask, value, x.data)
    except ValueError:
        raise ShapeError("masked_fill", current_scope(), [x.shape, mask.shape]) from None
    if out.shape != x.shape:
        raise ShapeError("masked_fill", current_scope(), [x.shape, mask.shape], "mask broadcasts past input")
    return make(out, (x,), lambda g: (np.where(mask, 0.0, g),), "masked_fill")


# ----------------------------------------------------------------- linear algebra

@register
def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", current_scope(), [a.shape, b.shape])
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError("matmul", current_scope(), [a.shape, b.shape]) from None

    def back(g):
        ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape) if a.requires_grad else None
        gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape) if b.requires_grad else None
        return ga, gb

    return make(out, (a, b), back, "matmul")


def linear(x, w, b=None) -> Tensor:
    y = matmul(x, w)
    return add(y, b) if b is not None else y


# ----------------------------------------------------------------- reductions

def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


@register
def sum(x, axis=None, keepdims=False) -> Tensor:  # noqa: A001 - mirrors numpy
    x = as_tensor(x)
    axes = _norm_axis(axis, x.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def back(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return make(out, (x,), back, "sum")


@register
def mean(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    axes = _norm_axis(axis, x.ndim)
    n = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / builtins.max(n, 1))


@register
def masked_sum(x, mask: np.ndarray, axis=None, keepdims=False) -> Tensor:
    """Sum of ``x`` over entries where the (constant) mask is nonzero."""
    return sum(mul(x, np.asarray(mask, dtype=np.float64)), axis=axis, keepdims=keepdims)


@register
def masked_mean(x, mask: np.ndarray, axis=None, keepdims=False) -> Tensor:
    """Mean over masked entries; an all-zero mask yields 0 with zero gradient."""
    x = as_tensor(x)
    m = np.broadcast_to(np.asarray(mask, dtype=np.float64), x.shape)
    count = m.sum(axis=_norm_axis(axis, x.ndim), keepdims=keepdims)
    return div(masked_sum(x, m, axis=axis, keepdims=keepdims), np.maximum(count, 1.0))


@register
def logsumexp(x, axis=-1, keepdims=False) -> Tensor:
    x = as_tensor(x)
    m = np.max(x.data, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    s = np.exp(x.data - m)
    tot = s.sum(axis=axis, keepdims=True)
    out_k = np.log(tot) + m
    out = out_k if keepdims else np.squeeze(out_k, axis=axis)
    soft = s / tot

    def back(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (g * soft,)

    return make(out, (x,), back, "logsumexp")


@register
def softmax(x, axis=-1) -> Tensor:
    x = as_tensor(x)
    z = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return make(out, (x,), back, "softmax")


@register
def log_softmax(x, axis=-1) -> Tensor:
    x = as_tensor(x)
    z = x.data - np.max(x.data, axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    p = np.exp(out)

    def back(g):
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return make(out, (x,), back, "log_softmax")


@register
def layer_norm(x, gamma, beta, eps: float = 1e-6) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError("layer_norm", current_scope(), [x.shape, gamma.shape, beta.shape])
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def back(g):
        gx = None
        if x.requires_grad:
            gh = g * gamma.data
            gx = inv * (gh - gh.mean(axis=-1, keepdims=True) - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        gg = _unbroadcast(g * xhat, gamma.shape) if gamma.requires_grad else None
        gb = _unbroadcast(g, beta.shape) if beta.requires_grad else None
        return gx, gg, gb

    return make(out, (x, gamma, beta), back, "layer_norm")


# ----------------------------------------------------------------- shape ops

@register
def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", current_scope(), [x.shape, tuple(shape)]) from None
    return make(out, (x,), lambda g: (g.reshape(x.shape),), "reshape")


@register
def transpose(x, axes=None) -> Tensor:
    x = as_tensor(x)
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    if sorted(a % x.ndim for a in axes) != list(range(x.ndim)):
        raise ShapeError("transpose", current_scope(), [x.shape], f"bad axes {axes}")
    inv = np.argsort([a % x.ndim for a in axes])
    return make(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),), "transpose")


def swapaxes(x, a1: int, a2: int) -> Tensor:
    x = as_tensor(x)
    axes = list(range(x.ndim))
    axes[a1], axes[a2] = axes[a2], axes[a1]
    return transpose(x, axes)


def _is_advanced(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return builtins.any(isinstance(i, (list, np.ndarray)) for i in items)


@register
def getitem(x, idx) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data[idx]
    except IndexError as e:
        raise ShapeError("getitem", current_scope(), [x.shape], str(e)) from None
    advanced = _is_advanced(idx)

    def back(g):
        full = np.zeros_like(x.data)
        if advanced:
            np.add.at(full, idx, g)
        else:
            full[idx] = g
        return (full,)

    return make(np.array(out, dtype=np.float64), (x,), back, "getitem")


@register
def concat(xs, axis=0) -> Tensor:
    xs = [as_tensor(t) for t in xs]
    try:
        out = np.concatenate([t.data for t in xs], axis=axis)
    except ValueError:
        raise ShapeError("concat", current_scope(), [t.shape for t in xs]) from None
    bounds = np.cumsum([t.shape[axis] for t in xs])[:-1]

    def back(g):
        return tuple(np.split(g, bounds, axis=axis))

    return make(out, xs, back, "concat")


@register
def stack(xs, axis=0) -> Tensor:
    xs = [as_tensor(t) for t in xs]
    try:
        out = np.stack([t.data for t in xs], axis=axis)
    except ValueError:
        raise ShapeError("stack", current_scope(), [t.shape for t in xs]) from None

    def back(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(xs)))

    return make(out, xs, back, "stack")


@register
def pad(x, pad_width) -> Tensor:
    """Zero padding; ``pad_width`` as for ``numpy.pad``."""
    x = as_tensor(x)
    out = np.pad(x.data, pad_width)
    sl = tuple(slice(lo, lo + n) for (lo, _), n in zip(pad_width, x.shape))
    return make(out, (x,), lambda g: (g[sl],), "pad")


@register
def take(x, indices, axis=0) -> Tensor:
    """Gather slices along ``axis`` (embedding lookup when axis=0)."""
    x = as_tensor(x)
    indices = np.asarray(indices, dtype=np.int64)
    try:
        out = np.take(x.data, indices, axis=axis)
    except IndexError as e:
        raise ShapeError("take", current_scope(), [x.shape, indices.shape], str(e)) from None

    def back(g):
        full = np.zeros_like(x.data)
        moved = np.moveaxis(full, axis, 0)
        gm = np.moveaxis(g.reshape(x.shape[:axis] + (indices.size,) + x.shape[axis + 1:]), axis, 0)
        np.add.at(moved, indices.ravel(), gm)
        return (full,)

    return make(out, (x,), back, "take")


@register
def take_along_axis(x, indices, axis=-1) -> Tensor:
    x = as_tensor(x)
    indices = np.asarray(indices, dtype=np.int64)
    try:
        out = np.take_along_axis(x.data, indices, axis=axis)
    except (IndexError, ValueError) as e:
        raise ShapeError("take_along_axis", current_scope(), [x.shape, indices.shape], str(e)) from None

    def back(g):
        full = np.zeros_like(x.data)
        idx = list(np.indices(indices.shape, sparse=True))
        idx[axis % x.ndim] = indices
        np.add.at(full, tuple(idx), g)
        return (full,)

    return make(out, (x,), back, "take_along_axis")


# ----------------------------------------------------------------- convolutions

@register
def conv2d(x, w, b=None, stride: int = 2, padding: int = 1) -> Tensor:
    """2-D convolution. x: (B, C, H, W); w: (O, C, kh, kw); b: (O,)."""
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ShapeError("conv2d", current_scope(), [x.shape, w.shape])
    B, C, H, W = x.shape
    O, _, kh, kw = w.shape
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    Ho, Wo = win.shape[2], win.shape[3]
    # patches: (B, Ho, Wo, C*kh*kw)
    patches = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(B, Ho, Wo, C * kh * kw)
    wmat = w.data.reshape(O, C * kh * kw)
    out = patches @ wmat.T
    if b is not None:
        b = as_tensor(b)
        out = out + b.data
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))
    parents = (x, w) if b is None else (x, w, b)

    def back(g):
        gt = g.transpose(0, 2, 3, 1)  # (B, Ho, Wo, O)
        gw = (gt.reshape(-1, O).T @ patches.reshape(-1, C * kh * kw)).reshape(w.shape) if w.requires_grad else None
        gx = None
        if x.requires_grad:
            gp = (gt @ wmat).reshape(B, Ho, Wo, C, kh, kw)
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i:i + stride * Ho:stride, j:j + stride * Wo:stride] += gp[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            gx = gxp[:, :, padding:padding + H, padding:padding + W]
        grads = [gx, gw]
        if b is not None:
            grads.append(gt.sum(axis=(0, 1, 2)) if b.requires_grad else None)
        return tuple(grads)

    return make(out, parents, back, "conv2d")


@register
def depthwise_conv1d(x, w, b=None, left: int | None = None) -> Tensor:
    """Per-channel conv over time with same-length output.

    x: (B, T, D); w: (k, D).  ``left`` frames of zero padding precede the
    sequence (default (k-1)//2), the remainder follow it.
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 3 or w.ndim != 2 or w.shape[1] != x.shape[2]:
        raise ShapeError("depthwise_conv1d", current_scope(), [x.shape, w.shape])
    k = w.shape[0]
    T = x.shape[1]
    lo = (k - 1) // 2 if left is None else left
    hi = k - 1 - lo
    xp = np.pad(x.data, ((0, 0), (lo, hi), (0, 0)))
    out = np.zeros_like(x.data)
    for j in range(k):
        out += xp[:, j:j + T, :] * w.data[j]
    if b is not None:
        b = as_tensor(b)
        out = out + b.data
    parents = (x, w) if b is None else (x, w, b)

    def back(g):
        gx = None
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for j in range(k):
                gxp[:, j:j + T, :] += g * w.data[j]
            gx = gxp[:, lo:lo + T, :]
        gw = None
        if w.requires_grad:
            gw = np.stack([(g * xp[:, j:j + T, :]).sum(axis=(0, 1)) for j in range(k)])
        grads = [gx, gw]
        if b is not None:
            grads.append(g.sum(axis=(0, 1)) if b.requires_grad else None)
        return tuple(grads)

    return make(out, parents, back, "depthwise_conv1d")
