"""Centralised training: VDN value decomposition plus the intent and attention regularisers."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..diffcore import Adam, Tape, Tensor, no_grad, ops
from ..diffcore.tensor import as_tensor
from ..fusion import entropy_loss
from ..intent import loss_continuity, loss_inference, loss_intent_total, loss_kl
from .net import Ablation, AgentNet
from .replay import EpisodeBatch, ReplayBuffer


@dataclass
class TrainConfig:
    gamma: float = 0.99
    lr: float = 5e-4
    batch_size: int = 32
    buffer_size: int = 2000
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_anneal_steps: int = 50000
    target_update: int = 200
    total_steps: int = 100000
    double_q: bool = True
    grad_clip: float = 10.0
    n_envs: int = 8
    updates_per_rollout: int = 1
    mixer: str = "vdn"

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        for name in ("eps_start", "eps_end"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.mixer != "vdn":
            raise ValueError(f"unsupported mixer {self.mixer!r}; only 'vdn' is available")

    def epsilon(self, env_steps: int) -> float:
        if self.eps_anneal_steps <= 0:
            return self.eps_end
        frac = min(1.0, env_steps / self.eps_anneal_steps)
        return self.eps_start + frac * (self.eps_end - self.eps_start)


def vdn_mix(chosen_q: Tensor) -> Tensor:
    """Team value as the sum of per-agent chosen-action values (last axis = agents)."""
    return ops.sum(chosen_q, axis=-1)


@dataclass
class ForwardTrace:
    q: list[Tensor]          # per t: [B, N, A]
    h: list[Tensor]
    e: list[Tensor]
    mu: list[Tensor]
    delta: list[Tensor]
    alpha: list[Tensor]


def unroll(net: AgentNet, batch: EpisodeBatch, noise_rng: np.random.Generator | None,
           ablation: Ablation) -> ForwardTrace:
    """Zero-delay forward pass over every stored observation (``T + 1`` steps)."""
    B, T = batch.size, batch.max_len
    N, A, dim = net.spec.n_agents, net.spec.n_actions, net.spec.intent.dim
    h = net.initial_hidden((B, N))
    trace = ForwardTrace([], [], [], [], [], [])
    for t in range(T + 1):
        prev = np.full((B, N), A, dtype=np.int64) if t == 0 else batch.actions[:, t - 1]
        eps = None if noise_rng is None else noise_rng.standard_normal((B, N, dim)).astype(h.value.dtype)
        out = net.decide_zero_delay(net.intent_step(batch.obs[:, t], h, prev, eps), ablation)
        h = out.h
        trace.q.append(out.q)
        trace.h.append(out.h)
        trace.e.append(out.e)
        trace.mu.append(out.mu)
        trace.delta.append(out.delta)
        trace.alpha.append(out.row.alpha)
    return trace


def td_targets(batch: EpisodeBatch, target_q: np.ndarray, online_q: np.ndarray, gamma: float,
               double_q: bool = True) -> np.ndarray:
    """``y_t = r_t + gamma * (1 - term_t) * Q_tot'(t+1)``.

    ``target_q`` / ``online_q`` are ``[B, T+1, N, A]``; the next-step action is
    chosen greedily by the online values when ``double_q`` holds, else by the
    target values.
    """
    nxt_online = online_q[:, 1:]
    nxt_target = target_q[:, 1:]
    choose = nxt_online if double_q else nxt_target
    greedy = choose.argmax(axis=-1)
    next_vals = np.take_along_axis(nxt_target, greedy[..., None], axis=-1)[..., 0].sum(axis=-1)
    return batch.rewards + gamma * (1.0 - batch.terminated) * next_vals


def td_loss(chosen_q_tot: Tensor, targets: np.ndarray, mask: np.ndarray) -> Tensor:
    """Masked mean squared TD error; ``chosen_q_tot``, ``targets`` and ``mask`` are ``[B, T]``."""
    mask = np.asarray(mask, dtype=chosen_q_tot.value.dtype)
    err = ops.sub(chosen_q_tot, np.asarray(targets, dtype=chosen_q_tot.value.dtype))
    sq = ops.mul(ops.square(err), mask)
    total = float(mask.sum())
    return ops.mul(ops.sum(sq), 1.0 / total if total > 0 else 0.0)


def total_loss(td: Tensor, intent_total, entropy_term) -> Tensor:
    return ops.add(ops.add(td, as_tensor(intent_total)), as_tensor(entropy_term))


def _future(arr: np.ndarray, k: int, T: int) -> np.ndarray:
    """``arr[:, k:k+T]`` zero-padded past the end."""
    out = np.zeros((arr.shape[0], T) + arr.shape[2:], dtype=arr.dtype)
    avail = max(0, min(T, arr.shape[1] - k))
    out[:, :avail] = arr[:, k:k + avail]
    return out


def intent_windows(batch: EpisodeBatch, K: int, n_actions: int):
    """Decoder inputs/targets for every (t, episode, agent), flattened to ``M = T*B*N`` rows.

    Returns ``obs_seq [K, M, obs]``, ``prev_action [M]``, ``targets [K, M]``, ``mask [K, M]``.
    """
    B, T = batch.size, batch.max_len
    N = batch.actions.shape[2]
    obs = batch.obs[:, :T]
    per_agent_fill = np.repeat(batch.filled[..., None], N, axis=2)
    obs_seq, targets, mask = [], [], []
    for k in range(K):
        obs_seq.append(_future(obs, k, T).transpose(1, 0, 2, 3).reshape(T * B * N, -1))
        targets.append(_future(batch.actions, k, T).transpose(1, 0, 2).reshape(-1))
        mask.append(_future(per_agent_fill, k, T).transpose(1, 0, 2).reshape(-1))
    prev = np.concatenate([np.full((B, 1, N), n_actions, dtype=np.int64), batch.actions[:, :T - 1]], axis=1)
    return np.stack(obs_seq), prev.transpose(1, 0, 2).reshape(-1), np.stack(targets), np.stack(mask)


class Learner:
    def __init__(self, net: AgentNet, target: AgentNet, config: TrainConfig, ablation: Ablation,
                 noise_rng: np.random.Generator, replay_rng: np.random.Generator):
        self.net = net
        self.target = target
        self.config = config
        self.ablation = ablation
        self.noise_rng = noise_rng
        self.replay_rng = replay_rng
        self.optimizer = Adam(net.parameters(), lr=config.lr, grad_clip=config.grad_clip)
        self.train_steps = 0
        self.skipped = 0
        self.target.copy_from(self.net)

    def losses(self, batch: EpisodeBatch) -> dict[str, Tensor]:
        net, spec = self.net, self.net.spec
        B, T, N = batch.size, batch.max_len, spec.n_agents
        trace = unroll(net, batch, self.noise_rng, self.ablation)

        with no_grad():
            target_trace = unroll(self.target, batch, None, self.ablation)
        target_q = np.stack([q.value for q in target_trace.q], axis=1)
        online_q = np.stack([q.value for q in trace.q], axis=1)
        y = td_targets(batch, target_q, online_q, self.config.gamma, self.config.double_q)

        chosen = [vdn_mix(ops.gather(trace.q[t], batch.actions[:, t])) for t in range(T)]
        q_tot = ops.stack(chosen, axis=1)                                     # [B, T]
        l_rl = td_loss(q_tot, y, batch.filled)

        hyper = spec.intent
        lam_inf = 0.0 if self.ablation.no_inference_loss else hyper.lambda_inf
        lam_c = 0.0 if self.ablation.no_continuity_loss else hyper.lambda_c
        fill_tbn = np.repeat(batch.filled.T[..., None], N, axis=2)             # [T, B, N]
        e_all = ops.stack(trace.e[:T], axis=0)                                # [T, B, N, n]

        if lam_inf > 0:
            obs_seq, prev, targets, mask = intent_windows(batch, hyper.K, spec.n_actions)
            h_flat = ops.reshape(ops.stack(trace.h[:T], axis=0), (T * B * N, spec.hidden))
            e_flat = ops.reshape(e_all, (T * B * N, hyper.dim))
            l_inf = loss_inference(net.predictor, e_flat, h_flat, obs_seq, prev, targets, mask)
        else:
            l_inf = Tensor(0.0)
        if lam_c > 0 and T > 1:
            l_c = loss_continuity(ops.index(e_all, slice(0, T - 1)), ops.index(e_all, slice(1, T)), fill_tbn[1:])
        else:
            l_c = Tensor(0.0)
        if hyper.lambda_k > 0:
            l_k = loss_kl(ops.stack(trace.mu[:T], axis=0), ops.stack(trace.delta[:T], axis=0), fill_tbn)
        else:
            l_k = Tensor(0.0)
        l_int = loss_intent_total(replace(hyper, lambda_inf=lam_inf, lambda_c=lam_c), l_inf, l_c, l_k)

        fh = spec.fusion
        if fh.lambda_e > 0 and not self.ablation.no_ia:
            l_e = entropy_loss(ops.stack(trace.alpha[:T], axis=0), fh.lambda_e, fh.entropy_sign, batch.filled.T)
        else:
            l_e = Tensor(0.0)
        return {"rl": l_rl, "inf": l_inf, "c": l_c, "k": l_k, "int": l_int, "e": l_e,
                "tot": total_loss(l_rl, l_int, l_e)}

    def train_step(self, buffer: ReplayBuffer) -> dict[str, float] | None:
        cfg = self.config
        if not buffer.can_sample(cfg.batch_size):
            self.skipped += 1
            return None
        batch = buffer.sample(cfg.batch_size, self.replay_rng)
        self.optimizer.zero_grad()
        with Tape() as tape:
            parts = self.losses(batch)
        tape.backward(parts["tot"])
        grad_norm = self.optimizer.step()
        self.train_steps += 1
        if self.train_steps % cfg.target_update == 0:
            self.target.copy_from(self.net)
        metrics = {name: float(t.value) for name, t in parts.items()}
        metrics["grad_norm"] = grad_norm
        return metrics
