from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class EpisodeRecord:
    """One finished episode, padded to the horizon.

    ``obs`` and ``state`` hold ``max_steps + 1`` entries (the observation after
    the final action included); per-step arrays hold ``max_steps``.
    """

    obs: np.ndarray          # [T+1, N, obs]
    state: np.ndarray        # [T+1, S]
    actions: np.ndarray      # [T, N]
    rewards: np.ndarray      # [T]
    terminated: np.ndarray   # [T]
    filled: np.ndarray       # [T]
    length: int
    success: bool
    internals: dict | None = None


@dataclass
class EpisodeBatch:
    obs: np.ndarray          # [B, T+1, N, obs]
    actions: np.ndarray      # [B, T, N]
    rewards: np.ndarray      # [B, T]
    terminated: np.ndarray   # [B, T]
    filled: np.ndarray       # [B, T]

    @property
    def size(self) -> int:
        return self.obs.shape[0]

    @property
    def max_len(self) -> int:
        return self.actions.shape[1]

    @classmethod
    def from_episodes(cls, episodes: list[EpisodeRecord]) -> "EpisodeBatch":
        T = max(ep.length for ep in episodes)
        return cls(
            obs=np.stack([ep.obs[:T + 1] for ep in episodes]),
            actions=np.stack([ep.actions[:T] for ep in episodes]),
            rewards=np.stack([ep.rewards[:T] for ep in episodes]),
            terminated=np.stack([ep.terminated[:T] for ep in episodes]),
            filled=np.stack([ep.filled[:T] for ep in episodes]),
        )


class ReplayBuffer:
    """Ring store of complete episodes with uniform sampling."""

    def __init__(self, capacity: int, max_steps: int, n_agents: int, obs_size: int, state_size: int):
        self.capacity = capacity
        T = max_steps
        self.obs = np.zeros((capacity, T + 1, n_agents, obs_size), dtype=np.float32)
        self.state = np.zeros((capacity, T + 1, state_size), dtype=np.float32)
        self.actions = np.zeros((capacity, T, n_agents), dtype=np.int64)
        self.rewards = np.zeros((capacity, T), dtype=np.float32)
        self.terminated = np.zeros((capacity, T), dtype=np.float32)
        self.filled = np.zeros((capacity, T), dtype=np.float32)
        self.lengths = np.zeros(capacity, dtype=np.int64)
        self.next_index = 0
        self.count = 0

    def __len__(self) -> int:
        return self.count

    def insert(self, ep: EpisodeRecord) -> None:
        i = self.next_index
        self.obs[i] = ep.obs
        self.state[i] = ep.state
        self.actions[i] = ep.actions
        self.rewards[i] = ep.rewards
        self.terminated[i] = ep.terminated
        self.filled[i] = ep.filled
        self.lengths[i] = ep.length
        self.next_index = (i + 1) % self.capacity
        self.count = min(self.count + 1, self.capacity)

    def can_sample(self, batch_size: int) -> bool:
        return self.count >= batch_size

    def sample(self, batch_size: int, rng: np.random.Generator) -> EpisodeBatch:
        idx = np.sort(rng.choice(self.count, size=batch_size, replace=False))
        T = int(self.lengths[idx].max())
        return EpisodeBatch(
            obs=self.obs[idx, :T + 1],
            actions=self.actions[idx, :T],
            rewards=self.rewards[idx, :T],
            terminated=self.terminated[idx, :T],
            filled=self.filled[idx, :T],
        )
