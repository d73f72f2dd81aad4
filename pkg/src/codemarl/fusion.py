"""Fusing buffered teammate messages: intent attention followed by staleness decay.

All functions are batched over leading axes and index messages as
``[..., receiver, sender]``.  A message a receiver never got is marked absent
and takes no part in the softmax; a receiver with no messages gets a zero
context vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .diffcore import Tensor, ops
from .diffcore.layers import parameter, xavier_uniform
from .diffcore.tensor import as_tensor, make_node


@dataclass
class FusionHyper:
    gamma_T: float = 0.8
    lambda_e: float = 0.01
    d_k: int = 32
    d_v: int = 32
    renormalize: bool = False
    # +1: the added term is lambda_e * H, so training lowers attention entropy.
    # -1: the term is -lambda_e * H.
    entropy_sign: int = 1

    def __post_init__(self):
        if not 0 < self.gamma_T <= 1:
            raise ValueError("gamma_T must lie in (0, 1]")
        if self.lambda_e < 0:
            raise ValueError("lambda_e must be >= 0")
        if self.entropy_sign not in (1, -1):
            raise ValueError("entropy_sign must be 1 or -1")


@dataclass
class AttentionParams:
    w_q: Tensor
    w_k: Tensor
    w_v: Tensor

    @property
    def d_k(self) -> int:
        return self.w_q.shape[1]

    @classmethod
    def create(cls, rng, intent_dim: int, content_dim: int, d_k: int, d_v: int) -> "AttentionParams":
        return cls(
            parameter(xavier_uniform(rng, intent_dim, d_k), "fusion.w_q"),
            parameter(xavier_uniform(rng, intent_dim, d_k), "fusion.w_k"),
            parameter(xavier_uniform(rng, intent_dim + content_dim, d_v), "fusion.w_v"),
        )

    def parameters(self) -> list[Tensor]:
        return [self.w_q, self.w_k, self.w_v]


@dataclass
class AttentionRow:
    alpha: Tensor            # [..., N, N] weights over present senders
    staleness: np.ndarray    # [..., N, N] steps since each buffered message was sent
    decayed: Tensor | None = None


def attention_scores(params: AttentionParams, e_self, buffered_intents, present, uniform: bool = False) -> Tensor:
    """Scaled dot-product attention of each receiver's intent over buffered sender intents.

    ``e_self`` is ``[..., N, n]``, ``buffered_intents`` ``[..., N, N, n]`` and
    ``present`` ``[..., N, N]``.  With ``uniform`` the learned scores are
    replaced by equal weights over present senders.
    """
    present = np.asarray(present, dtype=bool)
    e_self, buffered_intents = as_tensor(e_self), as_tensor(buffered_intents)
    if uniform:
        count = present.sum(axis=-1, keepdims=True)
        weights = np.where(present, 1.0 / np.maximum(count, 1), 0.0).astype(e_self.value.dtype)
        return Tensor(weights, dtype=e_self.value.dtype)
    q = ops.matmul(e_self, params.w_q)                       # [..., N, d_k]
    k = ops.matmul(buffered_intents, params.w_k)             # [..., N, N, d_k]
    q = ops.reshape(q, q.shape[:-1] + (1, q.shape[-1]))
    scores = ops.mul(ops.sum(ops.mul(q, k), axis=-1), 1.0 / math.sqrt(params.d_k))
    return ops.masked_softmax(scores, present)


def entropy_loss(alpha: Tensor, lambda_e: float, sign: int = 1, weights=None) -> Tensor:
    """``sign * lambda_e * sum_i H(alpha_i.)`` averaged over leading batch rows.

    ``alpha`` is ``[..., N, N]``; ``0 log 0`` counts as 0.  ``weights`` masks
    the leading rows (shape ``alpha.shape[:-2]``).
    """
    av = alpha.value
    safe = np.where(av > 0, 0.0, 1.0).astype(av.dtype)
    plogp = ops.mul(alpha, ops.log(ops.add(alpha, safe)))
    ent = ops.neg(ops.sum(ops.sum(plogp, axis=-1), axis=-1))  # [...]
    if weights is None:
        per = ops.mean(ent) if ent.value.ndim else ent
    else:
        w = np.asarray(weights, dtype=av.dtype)
        total = float(w.sum())
        per = ops.mul(ops.sum(ops.mul(ent, w)), 1.0 / total if total > 0 else 0.0)
    return ops.mul(per, float(sign) * lambda_e)


def decay_factors(staleness, gamma_T: float, dtype=np.float32) -> np.ndarray:
    return np.power(np.asarray(gamma_T, dtype=np.float64), np.asarray(staleness, dtype=np.float64)).astype(dtype)


def timeliness_decay(alpha: Tensor, staleness, gamma_T: float, renormalize: bool = False) -> Tensor:
    """Scale each weight by ``gamma_T ** staleness``.  No renormalisation unless asked."""
    factors = decay_factors(staleness, gamma_T, alpha.value.dtype)
    decayed = ops.mul(alpha, factors)
    if not renormalize:
        return decayed
    total = ops.sum(decayed, axis=-1, keepdims=True)
    guard = np.where(total.value > 0, 0.0, 1.0).astype(alpha.value.dtype)
    return ops.div(decayed, ops.add(total, guard))


def fuse(params: AttentionParams, decayed: Tensor, buffered_intents, buffered_contents) -> Tensor:
    """``c_i = sum_j decayed[i, j] * concat(e_j, h_j) @ W_V`` -> ``[..., N, d_v]``."""
    values = ops.matmul(ops.concat([as_tensor(buffered_intents), as_tensor(buffered_contents)], axis=-1), params.w_v)
    w = ops.reshape(decayed, decayed.shape + (1,))            # [..., N, N, 1]
    return ops.sum(ops.mul(w, values), axis=-2)


def broadcast_senders(x: Tensor, n_receivers: int) -> Tensor:
    """``[..., N, d]`` sender vectors -> ``[..., N_recv, N, d]``: the zero-delay buffer view."""
    x = as_tensor(x)
    expanded = ops.reshape(x, x.shape[:-2] + (1,) + x.shape[-2:])
    shape = x.shape[:-2] + (n_receivers,) + x.shape[-2:]
    return make_node(np.broadcast_to(expanded.value, shape).copy(), (expanded,), lambda g: (g,))


def self_excluded(n_agents: int, lead_shape=()) -> np.ndarray:
    present = ~np.eye(n_agents, dtype=bool)
    return np.broadcast_to(present, tuple(lead_shape) + present.shape).copy()


def fuse_messages(params: AttentionParams, hyper: FusionHyper, e_self, buffered_intents, buffered_contents,
                  present, staleness, no_ia: bool = False, no_ta: bool = False) -> tuple[Tensor, AttentionRow]:
    """Full receive path: attention, decay, weighted sum.  Returns the context and the row record."""
    alpha = attention_scores(params, e_self, buffered_intents, present, uniform=no_ia)
    gamma = 1.0 if no_ta else hyper.gamma_T
    decayed = timeliness_decay(alpha, staleness, gamma, hyper.renormalize)
    context = fuse(params, decayed, buffered_intents, buffered_contents)
    return context, AttentionRow(alpha, np.asarray(staleness), decayed)
