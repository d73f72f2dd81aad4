"""Hallway: agents on separate linear tracks must reach cell 0 on the same step.

Each agent only sees its own position.  The episode ends as soon as any agent
stands on cell 0 or the horizon runs out; the team is rewarded only when every
agent arrived together.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

STAY, LEFT, RIGHT = 0, 1, 2
ACTION_NAMES = ("Stay", "Left", "Right")


class EnvInterface(Protocol):
    n_agents: int
    observation_size: int
    state_size: int
    n_actions: int

    def reset(self, rng: np.random.Generator) -> np.ndarray: ...

    def step(self, joint_action) -> tuple[np.ndarray, float, bool]: ...


class ProtocolError(RuntimeError):
    """Environment used out of order (e.g. stepping a finished episode)."""


@dataclass
class HallwayConfig:
    n_agents: int = 2
    track_lengths: list[int] = field(default_factory=lambda: [6, 6])
    max_steps: int | None = None  # None -> 4 * max(track_lengths)
    success_reward: float = 10.0

    def __post_init__(self):
        self.track_lengths = [int(x) for x in self.track_lengths]
        if self.max_steps is None:
            self.max_steps = 4 * max(self.track_lengths)
        if self.n_agents < 2:
            raise ValueError("Hallway needs at least 2 agents")
        if len(self.track_lengths) != self.n_agents:
            raise ValueError(f"track_lengths has {len(self.track_lengths)} entries for {self.n_agents} agents")
        if min(self.track_lengths) < 2:
            raise ValueError("every track length must be >= 2")
        if self.max_steps < max(self.track_lengths):
            raise ValueError("max_steps must be >= the longest track")


@dataclass
class HallwayState:
    positions: np.ndarray
    step_count: int = 0
    done: bool = False


class Hallway:
    n_actions = 3

    def __init__(self, config: HallwayConfig):
        self.config = config
        self.n_agents = config.n_agents
        self.lengths = np.asarray(config.track_lengths, dtype=np.int64)
        self.observation_size = int(self.lengths.max()) + 1
        self.state_size = self.n_agents * self.observation_size
        self.state: HallwayState | None = None

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        positions = rng.integers(1, self.lengths + 1)
        self.state = HallwayState(positions=positions.astype(np.int64))
        return self.observations()

    def observations(self) -> np.ndarray:
        obs = np.zeros((self.n_agents, self.observation_size), dtype=np.float32)
        obs[np.arange(self.n_agents), self.state.positions] = 1.0
        return obs

    def global_state(self) -> np.ndarray:
        return self.observations().reshape(-1)

    def step(self, joint_action) -> tuple[np.ndarray, float, bool]:
        st = self.state
        if st is None or st.done:
            raise ProtocolError("step() called on a finished episode; call reset() first")
        actions = np.asarray(joint_action, dtype=np.int64)
        move = np.where(actions == LEFT, -1, np.where(actions == RIGHT, 1, 0))
        st.positions = np.clip(st.positions + move, 0, self.lengths)
        st.step_count += 1
        arrived = st.positions == 0
        reward = 0.0
        if arrived.any() or st.step_count >= self.config.max_steps:
            st.done = True
            if arrived.all():
                reward = float(self.config.success_reward)
        return self.observations(), reward, st.done
