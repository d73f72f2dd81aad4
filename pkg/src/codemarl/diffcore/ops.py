"""Differentiable primitives.

Each op evaluates in numpy and, when a tape is active, registers a closure
mapping the output gradient to input gradients.  Broadcasting follows numpy;
gradients are summed back to the operand shape by the tape.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .tensor import DimensionError, DomainError, NumericError, Tensor, as_tensor, make_node


def _t(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.value.dtype if like is not None else None
    return Tensor(x, dtype=dtype)


# -- elementwise ---------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    return make_node(a.value + b.value, (a, b), lambda g: (g, g))


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    return make_node(a.value - b.value, (a, b), lambda g: (g, -g))


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    av, bv = a.value, b.value
    return make_node(av * bv, (a, b), lambda g: (g * bv, g * av))


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    av, bv = a.value, b.value
    out = av / bv
    return make_node(out, (a, b), lambda g: (g / bv, -g * out / bv))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return make_node(-a.value, (a,), lambda g: (-g,))


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, _t(b, a)
    b = as_tensor(b)
    return _t(a, b), b


def relu(x: Tensor) -> Tensor:
    pos = x.value > 0
    return make_node(x.value * pos, (x,), lambda g: (g * pos,))


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    inside = (x.value >= lo) & (x.value <= hi)
    return make_node(np.clip(x.value, lo, hi), (x,), lambda g: (g * inside,))


def sigmoid(x: Tensor) -> Tensor:
    s = _sigmoid(x.value)
    return make_node(s, (x,), lambda g: (g * s * (1 - s),))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.value)
    return make_node(y, (x,), lambda g: (g * (1 - y * y),))


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.value)
    return make_node(y, (x,), lambda g: (g * y,))


def log(x: Tensor) -> Tensor:
    xv = x.value
    if np.any(xv <= 0):
        raise DomainError("log of non-positive value")
    return make_node(np.log(xv), (x,), lambda g: (g / xv,))


def sqrt(x: Tensor) -> Tensor:
    y = np.sqrt(x.value)
    return make_node(y, (x,), lambda g: (g * 0.5 / y,))


def square(x: Tensor) -> Tensor:
    xv = x.value
    return make_node(xv * xv, (x,), lambda g: (2 * g * xv,))


def _sigmoid(v: np.ndarray) -> np.ndarray:
    # split on sign so exp never overflows
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


# -- linear algebra ------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a @ b``.  ``a`` may carry leading batch axes when ``b`` is a matrix."""
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.value, b.value
    if av.ndim < 1 or bv.ndim < 2 or av.shape[-1] != bv.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {av.shape} @ {bv.shape}")
    out = av @ bv

    if bv.ndim == 2:
        def backward(g):
            ga = g @ bv.T
            gb = av.reshape(-1, av.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            return ga, gb
    else:
        if av.shape[:-2] != bv.shape[:-2]:
            raise DimensionError(f"batched matmul needs equal batch axes: {av.shape} @ {bv.shape}")

        def backward(g):
            return g @ np.swapaxes(bv, -1, -2), np.swapaxes(av, -1, -2) @ g

    return make_node(out, (a, b), backward)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    y = matmul(x, w)
    return y if b is None else add(y, b)


# -- reductions and shape ops --------------------------------------------------

def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    shape = x.value.shape
    out = x.value.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return make_node(np.asarray(out), (x,), backward)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = x.value.size if axis is None else np.prod([x.value.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum(x, axis, keepdims), 1.0 / float(n))


def reshape(x: Tensor, shape) -> Tensor:
    old = x.value.shape
    return make_node(x.value.reshape(shape), (x,), lambda g: (g.reshape(old),))


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    out = np.concatenate([x.value for x in xs], axis=axis)
    sizes = np.cumsum([x.value.shape[axis] for x in xs])[:-1]

    def backward(g):
        return tuple(np.split(g, sizes, axis=axis))

    return make_node(out, tuple(xs), backward)


def stack(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    out = np.stack([x.value for x in xs], axis=axis)

    def backward(g):
        return tuple(np.moveaxis(g, axis, 0))

    return make_node(out, tuple(xs), backward)


def index(x: Tensor, idx) -> Tensor:
    shape = x.value.shape
    dtype = x.value.dtype

    basic = all(isinstance(i, (int, slice, type(None), type(Ellipsis))) for i in (idx if isinstance(idx, tuple) else (idx,)))

    def backward(g):
        full = np.zeros(shape, dtype=dtype)
        if basic:
            full[idx] = g
        else:
            np.add.at(full, idx, g)
        return (full,)

    return make_node(x.value[idx], (x,), backward)


def gather(x: Tensor, idx: np.ndarray) -> Tensor:
    """Pick ``x[..., idx]`` along the last axis; ``idx`` has the leading shape of ``x``."""
    idx = np.asarray(idx, dtype=np.int64)
    if idx.shape != x.value.shape[:-1]:
        raise DimensionError(f"gather index shape {idx.shape} does not match {x.value.shape[:-1]}")
    shape = x.value.shape
    out = np.take_along_axis(x.value, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        full = np.zeros(shape, dtype=g.dtype)
        np.put_along_axis(full, idx[..., None], g[..., None], axis=-1)
        return (full,)

    return make_node(out, (x,), backward)


def detach(x: Tensor) -> Tensor:
    return Tensor(x.value, dtype=x.value.dtype)


# -- softmax family ------------------------------------------------------------

def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis, stabilised by subtracting the row max."""
    xv = x.value
    if xv.shape[-1] < 1:
        raise DimensionError("softmax of an empty axis")
    if not np.all(np.isfinite(xv)):
        raise NumericError("softmax input contains non-finite values")
    z = np.exp(xv - xv.max(axis=-1, keepdims=True))
    y = z / z.sum(axis=-1, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return make_node(y, (x,), backward)


def masked_softmax(x: Tensor, mask: np.ndarray) -> Tensor:
    """Softmax over the entries of the last axis where ``mask`` holds.

    Masked entries get weight exactly 0; a row with nothing unmasked is all 0.
    """
    mask = np.asarray(mask, dtype=bool)
    xv = x.value
    if not np.all(np.isfinite(xv[mask])):
        raise NumericError("masked_softmax input contains non-finite values")
    shifted = np.where(mask, xv, -np.inf)
    row_max = shifted.max(axis=-1, keepdims=True)
    row_max = np.where(np.isfinite(row_max), row_max, 0.0)
    z = np.where(mask, np.exp(np.where(mask, xv, 0.0) - row_max), 0.0).astype(xv.dtype)
    denom = z.sum(axis=-1, keepdims=True)
    y = z / np.where(denom > 0, denom, 1.0)

    def backward(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return make_node(y, (x,), backward)


def log_softmax(x: Tensor) -> Tensor:
    xv = x.value
    shifted = xv - xv.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    y = shifted - lse
    p = np.exp(y)

    def backward(g):
        return (g - p * g.sum(axis=-1, keepdims=True),)

    return make_node(y, (x,), backward)


def cross_entropy(logits: Tensor, target, weights: np.ndarray | None = None) -> Tensor:
    """Mean of ``-log softmax(logits)[target]``.

    ``logits`` is ``[..., n_actions]`` and ``target`` an int or int array of the
    leading shape.  With ``weights`` the result is the weighted mean
    ``sum(w * ce) / sum(w)``; all-zero weights give 0.
    """
    lv = logits.value
    n = lv.shape[-1]
    tgt = np.asarray(target, dtype=np.int64)
    if tgt.shape != lv.shape[:-1]:
        raise DimensionError(f"target shape {tgt.shape} does not match logits {lv.shape}")
    if np.any(tgt < 0) or np.any(tgt >= n):
        raise DomainError(f"target index out of range for {n} classes")
    if weights is None:
        w = np.ones(tgt.shape, dtype=lv.dtype)
    else:
        w = np.asarray(weights, dtype=lv.dtype)
    total = w.sum()
    scale = 1.0 / total if total > 0 else 0.0
    shifted = lv - lv.max(axis=-1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    logp = shifted - logz
    picked = np.take_along_axis(logp, tgt[..., None], axis=-1)[..., 0]
    out = np.asarray(-(w * picked).sum() * scale, dtype=lv.dtype)

    def backward(g):
        grad = np.exp(logp)
        np.put_along_axis(grad, tgt[..., None], np.take_along_axis(grad, tgt[..., None], axis=-1) - 1, axis=-1)
        return (grad * (w * scale * g)[..., None],)

    return make_node(out, (logits,), backward)


# -- sampling ------------------------------------------------------------------

def reparameterize(mu: Tensor, delta: Tensor, eps) -> Tensor:
    """``mu + delta * eps``; ``eps`` is treated as a constant."""
    dv = delta.value
    if np.any(dv <= 0):
        raise DomainError("reparameterize needs strictly positive delta")
    ev = eps.value if isinstance(eps, Tensor) else np.asarray(eps, dtype=mu.value.dtype)
    return make_node(mu.value + dv * ev, (mu, delta), lambda g: (g, g * ev))
