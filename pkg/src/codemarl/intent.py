"""Intent learning: trajectory encoding, a Gaussian intent head, and a K-step action decoder.

The intent ``e`` is a reparameterised sample from ``N(mu, delta^2)``
conditioned on the trajectory encoding and the previous action.  A small GRU
decoder, started from the trajectory encoding, has to predict the next K
actions from ``e``; that prediction error, a continuity term between adjacent
intents and a divergence term make up the intent loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffcore import Dense, GruCell, Tensor, ops
from .diffcore.tensor import as_tensor


LOG_SIGMA_BOUND = 10.0


@dataclass
class IntentHyper:
    K: int = 4
    dim: int = 8
    lambda_inf: float = 1.0
    lambda_c: float = 0.1
    lambda_k: float = 0.001
    # "prior": the objective adds lambda_k * KL, pulling intents toward N(0, I).
    # "printed": it adds lambda_k * loss_kl (= -KL), which is unbounded below.
    kl_mode: str = "prior"

    def __post_init__(self):
        if self.kl_mode not in ("prior", "printed"):
            raise ValueError("kl_mode must be 'prior' or 'printed'")
        if self.K < 1:
            raise ValueError("intent horizon K must be >= 1")
        if min(self.lambda_inf, self.lambda_c, self.lambda_k) < 0:
            raise ValueError("intent loss weights must be >= 0")


def one_hot(indices, size: int, dtype=np.float32) -> np.ndarray:
    indices = np.asarray(indices, dtype=np.int64)
    out = np.zeros(indices.shape + (size,), dtype=dtype)
    np.put_along_axis(out, indices[..., None], 1, axis=-1)
    return out


@dataclass
class TrajectoryEncoder:
    embed: Dense
    gru: GruCell

    @classmethod
    def create(cls, rng, obs_size: int, hidden: int) -> "TrajectoryEncoder":
        return cls(Dense.create(rng, obs_size, hidden, "traj.embed"), GruCell.create(rng, hidden, hidden, "traj.gru"))

    def parameters(self) -> list[Tensor]:
        return self.embed.parameters() + self.gru.parameters()


def encode_step(enc: TrajectoryEncoder, obs, h_prev: Tensor) -> Tensor:
    """Fold one observation into the trajectory encoding."""
    return enc.gru(ops.relu(enc.embed(as_tensor(obs))), h_prev)


@dataclass
class IntentEncoder:
    hidden: Dense
    mu: Dense
    log_sigma: Dense

    @classmethod
    def create(cls, rng, n_h: int, n_actions: int, dim: int) -> "IntentEncoder":
        # one extra action slot encodes "no previous action" at t = 0
        return cls(
            Dense.create(rng, n_h + n_actions + 1, n_h, "intent.hidden"),
            Dense.create(rng, n_h, dim, "intent.mu"),
            Dense.create(rng, n_h, dim, "intent.log_sigma"),
        )

    def parameters(self) -> list[Tensor]:
        return self.hidden.parameters() + self.mu.parameters() + self.log_sigma.parameters()

    def distribution(self, h: Tensor, prev_action_onehot) -> tuple[Tensor, Tensor]:
        z = ops.relu(self.hidden(ops.concat([h, as_tensor(prev_action_onehot)], axis=-1)))
        # bounded so that delta stays a positive finite float32
        return self.mu(z), ops.exp(ops.clip(self.log_sigma(z), -LOG_SIGMA_BOUND, LOG_SIGMA_BOUND))


def intent_sample(ienc: IntentEncoder, h: Tensor, prev_action, n_actions: int,
                  rng: np.random.Generator | None = None) -> tuple[Tensor, Tensor, Tensor]:
    """Return ``(mu, delta, e)``.  With ``rng=None`` the noise is off and ``e = mu``."""
    mu, delta = ienc.distribution(h, one_hot(prev_action, n_actions + 1, h.value.dtype))
    if rng is None:
        return mu, delta, mu
    eps = rng.standard_normal(mu.shape).astype(mu.value.dtype)
    return mu, delta, ops.reparameterize(mu, delta, eps)


@dataclass
class SeqPredictor:
    gru: GruCell
    head_hidden: Dense
    head_out: Dense
    n_actions: int
    K: int

    @classmethod
    def create(cls, rng, obs_size: int, n_actions: int, n_h: int, dim: int, K: int) -> "SeqPredictor":
        return cls(
            GruCell.create(rng, obs_size + n_actions + 1, n_h, "pred.gru"),
            Dense.create(rng, n_h + dim, n_h, "pred.head_hidden"),
            Dense.create(rng, n_h, n_actions, "pred.head_out"),
            n_actions,
            K,
        )

    def parameters(self) -> list[Tensor]:
        return self.gru.parameters() + self.head_hidden.parameters() + self.head_out.parameters()

    def logits(self, hidden: Tensor, e: Tensor) -> Tensor:
        return self.head_out(ops.relu(self.head_hidden(ops.concat([hidden, e], axis=-1))))

    def rollout(self, e: Tensor, h: Tensor, obs_seq, prev_action) -> tuple[list[Tensor], np.ndarray]:
        """Run the decoder for ``len(obs_seq)`` steps.

        Step 0 consumes ``(o^t, a^{t-1})``; later steps consume the real
        future observation and the decoder's own previous argmax.
        Returns the per-step logits and the predicted actions ``[K, ...]``.
        """
        dtype = h.value.dtype
        hidden = h
        action_in = np.asarray(prev_action, dtype=np.int64)
        logits, predicted = [], []
        for k in range(len(obs_seq)):
            x = np.concatenate([np.asarray(obs_seq[k], dtype=dtype), one_hot(action_in, self.n_actions + 1, dtype)], axis=-1)
            hidden = self.gru(Tensor(x, dtype=dtype), hidden)
            step_logits = self.logits(hidden, e)
            action_in = step_logits.value.argmax(axis=-1)
            logits.append(step_logits)
            predicted.append(action_in)
        return logits, np.stack(predicted)


def loss_inference(predictor: SeqPredictor, e: Tensor, h: Tensor, obs_seq, prev_action, target_actions,
                   mask=None) -> Tensor:
    """Mean cross-entropy of the K-step decoded actions against the realised ones.

    ``obs_seq`` is ``[K, M, obs]``, ``target_actions`` and ``mask`` are
    ``[K, M]``.  Steps past the end of an episode carry mask 0 and contribute
    nothing.
    """
    logits, _ = predictor.rollout(e, h, obs_seq, prev_action)
    stacked = ops.stack(logits, axis=0)
    target = np.asarray(target_actions, dtype=np.int64)
    weights = None if mask is None else np.asarray(mask, dtype=stacked.value.dtype)
    return ops.cross_entropy(stacked, target, weights)


def decode_intent(predictor: SeqPredictor, e, h, obs_seq, prev_action) -> np.ndarray:
    """Greedy K-step action sequence decoded from an intent (no gradients)."""
    _, actions = predictor.rollout(as_tensor(e), as_tensor(h), obs_seq, prev_action)
    return actions


def _weighted_mean(x: Tensor, weights) -> Tensor:
    if weights is None:
        return ops.mean(x)
    w = np.asarray(weights, dtype=x.value.dtype)
    total = float(w.sum())
    if total == 0:
        return ops.mul(ops.sum(x), 0.0)
    return ops.mul(ops.sum(ops.mul(x, w)), 1.0 / total)


def loss_continuity(e_prev: Tensor, e_t: Tensor, weights=None) -> Tensor:
    """Negative cosine similarity of consecutive intents, averaged over rows."""
    e_prev, e_t = as_tensor(e_prev), as_tensor(e_t)
    dot = ops.sum(ops.mul(e_prev, e_t), axis=-1)
    n_prev = ops.add(ops.sqrt(ops.sum(ops.square(e_prev), axis=-1)), 1e-8)
    n_t = ops.add(ops.sqrt(ops.sum(ops.square(e_t), axis=-1)), 1e-8)
    cos = ops.div(dot, ops.mul(n_prev, n_t))
    return ops.neg(_weighted_mean(cos, weights))


def loss_kl(mu: Tensor, delta: Tensor, weights=None) -> Tensor:
    """``-1/2 * sum_i (delta_i^2 + mu_i^2 - 1 - log delta_i^2)``, averaged over rows.

    This is the negative of KL(N(mu, delta^2) || N(0, I)): zero at the prior
    and below zero everywhere else.
    """
    mu, delta = as_tensor(mu), as_tensor(delta)
    d2 = ops.square(delta)
    inner = ops.sub(ops.sub(ops.add(d2, ops.square(mu)), 1.0), ops.log(d2))
    per_row = ops.mul(ops.sum(inner, axis=-1), -0.5)
    return _weighted_mean(per_row, weights)


def loss_intent_total(hyper: IntentHyper, l_inf, l_c, l_k) -> Tensor:
    """Weighted intent objective; ``l_k`` is the value of :func:`loss_kl`."""
    k_weight = hyper.lambda_k if hyper.kl_mode == "printed" else -hyper.lambda_k
    return ops.add(ops.add(ops.mul(as_tensor(l_inf), hyper.lambda_inf), ops.mul(as_tensor(l_c), hyper.lambda_c)),
                   ops.mul(as_tensor(l_k), k_weight))
