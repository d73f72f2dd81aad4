"""The shared per-agent network: trajectory encoder, intent head, decoder, fusion and Q head."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..diffcore import Dense, Tensor, ops
from ..diffcore.tensor import as_tensor
from ..fusion import AttentionParams, AttentionRow, FusionHyper, broadcast_senders, fuse_messages, self_excluded
from ..intent import IntentEncoder, IntentHyper, SeqPredictor, TrajectoryEncoder, encode_step, one_hot


@dataclass
class Ablation:
    no_ia: bool = False
    no_ta: bool = False
    no_inference_loss: bool = False
    no_continuity_loss: bool = False


@dataclass
class NetSpec:
    n_agents: int
    obs_size: int
    n_actions: int
    hidden: int = 64
    q_hidden: int = 64
    intent: IntentHyper = field(default_factory=IntentHyper)
    fusion: FusionHyper = field(default_factory=FusionHyper)


@dataclass
class StepOut:
    h: Tensor
    mu: Tensor
    delta: Tensor
    e: Tensor
    context: Tensor | None = None
    row: AttentionRow | None = None
    q: Tensor | None = None


class AgentNet:
    """One set of parameters shared by every agent; agents differ only in their inputs."""

    def __init__(self, spec: NetSpec, rng: np.random.Generator):
        self.spec = spec
        n_h, dim = spec.hidden, spec.intent.dim
        self.traj = TrajectoryEncoder.create(rng, spec.obs_size, n_h)
        self.intent_enc = IntentEncoder.create(rng, n_h, spec.n_actions, dim)
        self.predictor = SeqPredictor.create(rng, spec.obs_size, spec.n_actions, n_h, dim, spec.intent.K)
        self.attention = AttentionParams.create(rng, dim, n_h, spec.fusion.d_k, spec.fusion.d_v)
        self.q_hidden = Dense.create(rng, n_h + dim + spec.fusion.d_v, spec.q_hidden, "q.hidden")
        self.q_out = Dense.create(rng, spec.q_hidden, spec.n_actions, "q.out")

    def parameters(self) -> list[Tensor]:
        return (self.traj.parameters() + self.intent_enc.parameters() + self.predictor.parameters()
                + self.attention.parameters() + self.q_hidden.parameters() + self.q_out.parameters())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {p.name: p.value.copy() for p in self.parameters()}

    def load_state_dict(self, arrays: dict[str, np.ndarray]) -> None:
        for p in self.parameters():
            if p.name not in arrays:
                raise KeyError(f"checkpoint lacks parameter {p.name}")
            value = np.asarray(arrays[p.name])
            if value.shape != p.value.shape:
                raise ValueError(f"{p.name}: checkpoint shape {value.shape} != {p.value.shape}")
            p.value = value.astype(p.value.dtype, copy=True)

    def copy_from(self, other: "AgentNet") -> None:
        for mine, theirs in zip(self.parameters(), other.parameters()):
            mine.value = theirs.value.copy()

    # -- forward pieces --------------------------------------------------------

    def initial_hidden(self, lead_shape) -> Tensor:
        return Tensor(np.zeros(tuple(lead_shape) + (self.spec.hidden,)))

    def intent_step(self, obs, h_prev: Tensor, prev_action, eps: np.ndarray | None) -> StepOut:
        """Encode one observation and draw the intent; ``eps=None`` gives ``e = mu``."""
        h = encode_step(self.traj, obs, h_prev)
        mu, delta = self.intent_enc.distribution(h, one_hot(prev_action, self.spec.n_actions + 1, h.value.dtype))
        e = mu if eps is None else ops.reparameterize(mu, delta, eps)
        return StepOut(h=h, mu=mu, delta=delta, e=e)

    def decide(self, out: StepOut, buffered_intents, buffered_contents, present, staleness,
               ablation: Ablation) -> StepOut:
        """Fuse buffered messages and evaluate the Q head on ``(h, e, c)``."""
        context, row = fuse_messages(self.attention, self.spec.fusion, out.e, buffered_intents, buffered_contents,
                                     present, staleness, no_ia=ablation.no_ia, no_ta=ablation.no_ta)
        out.context, out.row = context, row
        out.q = self.q_values(out.h, out.e, context)
        return out

    def decide_zero_delay(self, out: StepOut, ablation: Ablation) -> StepOut:
        """Training-time receive path: every teammate's current message, zero staleness."""
        n = self.spec.n_agents
        lead = out.e.shape[:-2]
        intents = broadcast_senders(out.e, n)
        contents = broadcast_senders(out.h, n)
        present = self_excluded(n, lead)
        staleness = np.zeros(present.shape, dtype=np.int64)
        return self.decide(out, intents, contents, present, staleness, ablation)

    def q_values(self, h, e, context) -> Tensor:
        x = ops.concat([as_tensor(h), as_tensor(e), as_tensor(context)], axis=-1)
        return self.q_out(ops.relu(self.q_hidden(x)))


def act(q: np.ndarray, epsilon: float, rng: np.random.Generator) -> np.ndarray:
    """Epsilon-greedy over the last axis; greedy ties go to the lowest action index.

    Draws a fixed number of variates per call whatever ``epsilon`` is.
    """
    q = np.asarray(q)
    explore = rng.random(q.shape[:-1]) < epsilon
    random_actions = rng.integers(0, q.shape[-1], size=q.shape[:-1])
    return np.where(explore, random_actions, q.argmax(axis=-1)).astype(np.int64)
