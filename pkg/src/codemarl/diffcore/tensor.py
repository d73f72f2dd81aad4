"""Tensors and the tape that records operations for reverse-mode differentiation.

Operations only record themselves while a :class:`Tape` is active.  Outside a
tape every op is a plain numpy evaluation, which is what rollouts and
evaluation use.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterator, Sequence

import numpy as np

_DTYPE = np.float32
_TAPES: list["Tape"] = []


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class NumericError(ArithmeticError):
    """Non-finite input where finite values are required."""


class DomainError(ValueError):
    """Argument outside the domain of an operation."""


def default_dtype():
    return _DTYPE


@contextlib.contextmanager
def precision(dtype) -> Iterator[None]:
    """Temporarily switch the dtype of newly created tensors (float32/float64)."""
    global _DTYPE
    old = _DTYPE
    _DTYPE = np.dtype(dtype).type
    try:
        yield
    finally:
        _DTYPE = old


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "parents", "backward_fn", "name")

    def __init__(self, value, requires_grad: bool = False, name: str | None = None, dtype=None):
        arr = np.asarray(value, dtype=dtype or _DTYPE)
        self.value = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.parents: tuple[Tensor, ...] = ()
        self.backward_fn: Callable | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    def numpy(self) -> np.ndarray:
        return self.value

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    # Operator sugar; the functions live in ops.py.
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from . import ops
        return ops.index(self, index)


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


class Tape:
    """Ordered record of executed primitives.

    Nodes are appended in execution order, so walking the list backwards
    reaches every node after all of its consumers and exactly once.
    """

    def __init__(self):
        self.nodes: list[Tensor] = []

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, *exc) -> None:
        popped = _TAPES.pop()
        assert popped is self

    def record(self, out: Tensor) -> None:
        self.nodes.append(out)

    def backward(self, loss: Tensor, seed: np.ndarray | None = None) -> None:
        if seed is None:
            if loss.value.size != 1:
                raise DimensionError(f"backward from non-scalar of shape {loss.shape} needs an explicit seed")
            seed = np.ones_like(loss.value)
        loss.grad = seed if loss.grad is None else loss.grad + seed
        for node in reversed(self.nodes):
            g = node.grad
            if g is None or node.backward_fn is None:
                continue
            grads = node.backward_fn(g)
            for parent, pg in zip(node.parents, grads):
                if pg is None or not parent.requires_grad:
                    continue
                if pg.shape != parent.value.shape:
                    pg = _unbroadcast(pg, parent.value.shape)
                if parent.grad is None:
                    parent.grad = pg.astype(parent.value.dtype, copy=True)
                else:
                    parent.grad = parent.grad + pg
            # intermediate grads are no longer needed once propagated
            node.backward_fn = None
            if node.parents:
                node.grad = None
        self.nodes.clear()


def current_tape() -> Tape | None:
    return _TAPES[-1] if _TAPES else None


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Suspend recording, e.g. for a target-network pass inside a training step."""
    saved = _TAPES[:]
    _TAPES.clear()
    try:
        yield
    finally:
        _TAPES[:] = saved


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def make_node(value: np.ndarray, parents: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    """Wrap an op result, recording it on the active tape when any input is tracked."""
    out = Tensor.__new__(Tensor)
    out.value = value
    out.grad = None
    out.name = None
    tape = current_tape()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = tuple(parents)
        out.backward_fn = backward_fn
        tape.record(out)
    else:
        out.requires_grad = False
        out.parents = ()
        out.backward_fn = None
    return out
