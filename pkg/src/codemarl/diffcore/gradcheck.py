"""Central finite differences against tape gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, Tensor


def analytic_grads(fn: Callable[[], Tensor], inputs: Sequence[Tensor]) -> list[np.ndarray]:
    for x in inputs:
        x.grad = None
    with Tape() as tape:
        out = fn()
    tape.backward(out)
    return [np.zeros_like(x.value) if x.grad is None else x.grad.copy() for x in inputs]


def numeric_grads(fn: Callable[[], Tensor], inputs: Sequence[Tensor], h: float = 1e-5) -> list[np.ndarray]:
    result = []
    for x in inputs:
        g = np.zeros_like(x.value)
        flat = x.value.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = float(fn().value)
            flat[i] = old - h
            down = float(fn().value)
            flat[i] = old
            gflat[i] = (up - down) / (2 * h)
        result.append(g)
    return result


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    num = np.linalg.norm((a - b).ravel())
    den = max(np.linalg.norm(a.ravel()), np.linalg.norm(b.ravel()), 1e-12)
    return float(num / den)


def max_relative_error(fn: Callable[[], Tensor], inputs: Sequence[Tensor], h: float = 1e-5) -> float:
    """Worst relative error over ``inputs`` between tape and finite-difference gradients."""
    ana = analytic_grads(fn, inputs)
    num = numeric_grads(fn, inputs, h)
    return max(relative_error(a, n) for a, n in zip(ana, num))
