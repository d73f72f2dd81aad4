"""Parameter containers: dense layers and the GRU cell."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .tensor import DimensionError, Tensor, default_dtype, make_node


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    shape = shape or (fan_in, fan_out)
    return rng.uniform(-bound, bound, size=shape).astype(default_dtype())


def parameter(value: np.ndarray, name: str) -> Tensor:
    return Tensor(value, requires_grad=True, name=name)


@dataclass
class Dense:
    weight: Tensor
    bias: Tensor

    @classmethod
    def create(cls, rng, n_in: int, n_out: int, name: str) -> "Dense":
        return cls(
            parameter(xavier_uniform(rng, n_in, n_out), f"{name}.weight"),
            parameter(np.zeros(n_out), f"{name}.bias"),
        )

    def __call__(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.weight, self.bias)

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]


@dataclass
class GruCell:
    """Gated recurrent unit; gate blocks are stacked as [reset, update, candidate].

    ``w_ih`` is ``[n_in, 3*n_h]`` and ``w_hh`` is ``[n_h, 3*n_h]``.
    """

    w_ih: Tensor
    w_hh: Tensor
    b_ih: Tensor
    b_hh: Tensor

    @property
    def input_size(self) -> int:
        return self.w_ih.shape[0]

    @property
    def hidden_size(self) -> int:
        return self.w_hh.shape[0]

    @classmethod
    def create(cls, rng, n_in: int, n_h: int, name: str) -> "GruCell":
        w_ih = np.concatenate([xavier_uniform(rng, n_in, n_h) for _ in range(3)], axis=1)
        w_hh = np.concatenate([xavier_uniform(rng, n_h, n_h) for _ in range(3)], axis=1)
        return cls(
            parameter(w_ih, f"{name}.w_ih"),
            parameter(w_hh, f"{name}.w_hh"),
            parameter(np.zeros(3 * n_h), f"{name}.b_ih"),
            parameter(np.zeros(3 * n_h), f"{name}.b_hh"),
        )

    @classmethod
    def zeros(cls, n_in: int, n_h: int, name: str = "gru") -> "GruCell":
        return cls(
            parameter(np.zeros((n_in, 3 * n_h)), f"{name}.w_ih"),
            parameter(np.zeros((n_h, 3 * n_h)), f"{name}.w_hh"),
            parameter(np.zeros(3 * n_h), f"{name}.b_ih"),
            parameter(np.zeros(3 * n_h), f"{name}.b_hh"),
        )

    def __call__(self, x: Tensor, h_prev: Tensor) -> Tensor:
        return gru_step(self, x, h_prev)

    def parameters(self) -> list[Tensor]:
        return [self.w_ih, self.w_hh, self.b_ih, self.b_hh]


def gru_step(cell: GruCell, x: Tensor, h_prev: Tensor) -> Tensor:
    """One GRU update on ``x`` ``[..., n_in]`` and ``h_prev`` ``[..., n_h]``."""
    xv, hv = x.value, h_prev.value
    n_h = cell.hidden_size
    if xv.shape[-1] != cell.input_size or hv.shape[-1] != n_h or xv.shape[:-1] != hv.shape[:-1]:
        raise DimensionError(
            f"gru_step expects x[..., {cell.input_size}] and h[..., {n_h}], got {xv.shape} and {hv.shape}"
        )
    w_ih, w_hh = cell.w_ih.value, cell.w_hh.value
    gi = xv @ w_ih + cell.b_ih.value
    gh = hv @ w_hh + cell.b_hh.value
    r = ops._sigmoid(gi[..., :n_h] + gh[..., :n_h])
    z = ops._sigmoid(gi[..., n_h:2 * n_h] + gh[..., n_h:2 * n_h])
    gh_n = gh[..., 2 * n_h:]
    n = np.tanh(gi[..., 2 * n_h:] + r * gh_n)
    out = (1 - z) * n + z * hv

    def backward(g):
        dn = g * (1 - z) * (1 - n * n)
        dz = g * (hv - n) * z * (1 - z)
        dr = dn * gh_n * r * (1 - r)
        dgi = np.concatenate([dr, dz, dn], axis=-1)
        dgh = np.concatenate([dr, dz, dn * r], axis=-1)
        flat_gi = dgi.reshape(-1, 3 * n_h)
        flat_gh = dgh.reshape(-1, 3 * n_h)
        dx = dgi @ w_ih.T
        dh = dgh @ w_hh.T + g * z
        return (
            dx,
            dh,
            xv.reshape(-1, xv.shape[-1]).T @ flat_gi,
            hv.reshape(-1, n_h).T @ flat_gh,
            flat_gi.sum(axis=0),
            flat_gh.sum(axis=0),
        )

    return make_node(out, (x, h_prev, cell.w_ih, cell.w_hh, cell.b_ih, cell.b_hh), backward)
