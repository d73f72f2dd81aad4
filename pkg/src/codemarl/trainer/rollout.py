"""Running episodes through the communication protocol.

Per decision step every agent encodes its observation, draws an intent,
broadcasts ``<i, e, h, t>`` on the channel, collects whatever has arrived,
fuses it and acts.  Several environments advance in lock-step so the network
runs batched; each environment has its own channel.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..channel import Channel, DelayModel, Message
from .net import Ablation, AgentNet, act
from .replay import EpisodeRecord


def rollout_episodes(net: AgentNet, envs: Sequence, channels: Sequence[Channel], env_rngs: Sequence[np.random.Generator],
                     epsilon: float, explore_rng: np.random.Generator, noise_rng: np.random.Generator | None,
                     ablation: Ablation | None = None, keep_internals: bool = False) -> list[EpisodeRecord]:
    """Play one episode in each of ``envs`` and return their records.

    ``noise_rng=None`` switches intent sampling off (``e = mu``), as in evaluation.
    """
    ablation = ablation or Ablation()
    spec = net.spec
    E, N, A = len(envs), spec.n_agents, spec.n_actions
    dim, n_h = spec.intent.dim, spec.hidden
    T = envs[0].config.max_steps
    obs_size, state_size = envs[0].observation_size, envs[0].state_size

    obs_buf = np.zeros((E, T + 1, N, obs_size), dtype=np.float32)
    state_buf = np.zeros((E, T + 1, state_size), dtype=np.float32)
    actions_buf = np.zeros((E, T, N), dtype=np.int64)
    rewards = np.zeros((E, T), dtype=np.float32)
    terminated = np.zeros((E, T), dtype=np.float32)
    filled = np.zeros((E, T), dtype=np.float32)
    lengths = np.zeros(E, dtype=np.int64)
    if keep_internals:
        h_trace = np.zeros((E, T, N, n_h), dtype=np.float32)
        e_trace = np.zeros((E, T, N, dim), dtype=np.float32)
        positions = np.zeros((E, T + 1, N), dtype=np.int64)

    obs = np.stack([env.reset(rng) for env, rng in zip(envs, env_rngs)])
    for k, (env, ch) in enumerate(zip(envs, channels)):
        ch.reset()
        obs_buf[k, 0] = obs[k]
        state_buf[k, 0] = env.global_state()
        if keep_internals:
            positions[k, 0] = env.state.positions

    h = net.initial_hidden((E, N))
    prev = np.full((E, N), A, dtype=np.int64)
    active = np.ones(E, dtype=bool)
    for t in range(T):
        if not active.any():
            break
        eps = None if noise_rng is None else noise_rng.standard_normal((E, N, dim)).astype(np.float32)
        out = net.intent_step(obs, h, prev, eps)
        e_val, h_val = out.e.value, out.h.value

        intents = np.zeros((E, N, N, dim), dtype=e_val.dtype)
        contents = np.zeros((E, N, N, n_h), dtype=h_val.dtype)
        present = np.zeros((E, N, N), dtype=bool)
        staleness = np.zeros((E, N, N), dtype=np.int64)
        for k in np.flatnonzero(active):
            ch = channels[k]
            for i in range(N):
                ch.broadcast(Message(i, e_val[k, i], h_val[k, i], t), t)
            ch.deliver(t)
            intents[k], contents[k], present[k], staleness[k] = ch.buffer_arrays(t, dim, n_h)
        net.decide(out, intents, contents, present, staleness, ablation)
        for k in np.flatnonzero(active):
            if channels[k].model.kind == "infinite":
                assert not present[k].any() and not np.any(out.context.value[k]), "infinite delay leaked a message"

        actions = act(out.q.value, epsilon, explore_rng)
        for k in np.flatnonzero(active):
            o, r, done = envs[k].step(actions[k])
            actions_buf[k, t] = actions[k]
            rewards[k, t] = r
            filled[k, t] = 1.0
            terminated[k, t] = float(done)
            obs_buf[k, t + 1] = o
            state_buf[k, t + 1] = envs[k].global_state()
            if keep_internals:
                h_trace[k, t] = h_val[k]
                e_trace[k, t] = e_val[k]
                positions[k, t + 1] = envs[k].state.positions
            obs[k] = o
            if done:
                active[k] = False
                lengths[k] = t + 1
        h = out.h
        prev = actions

    records = []
    for k in range(E):
        internals = None
        if keep_internals:
            internals = {"h": h_trace[k], "e": e_trace[k], "positions": positions[k]}
        records.append(EpisodeRecord(
            obs=obs_buf[k], state=state_buf[k], actions=actions_buf[k], rewards=rewards[k],
            terminated=terminated[k], filled=filled[k], length=int(lengths[k]),
            success=bool(rewards[k].sum() > 0), internals=internals,
        ))
    return records


def rollout_episode(net: AgentNet, env, channel: Channel | None, epsilon: float, rng: np.random.Generator,
                    noise_rng: np.random.Generator | None = None, ablation: Ablation | None = None,
                    keep_internals: bool = False) -> EpisodeRecord:
    """Single-environment convenience wrapper; defaults to a zero-delay channel."""
    if channel is None:
        channel = Channel(env.n_agents, DelayModel("none"))
    return rollout_episodes(net, [env], [channel], [rng], epsilon, rng, noise_rng, ablation, keep_internals)[0]
