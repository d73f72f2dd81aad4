"""Seeded random streams.

Every consumer of randomness draws from its own Philox stream, derived from
the run seed and a fixed stream id.  Adding draws to one stream never shifts
another, which keeps runs bitwise reproducible.
"""

from __future__ import annotations

import numpy as np

# stream ids; never renumber, checkpoints and metrics depend on them
INIT = 0
EXPLORE = 1
NOISE = 2
DELAY = 3
ENV = 4
EVAL = 5
REPLAY = 6


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=tuple(key))))


class Streams:
    def __init__(self, seed: int):
        self.seed = seed
        self.init = stream(seed, INIT)
        self.explore = stream(seed, EXPLORE)
        self.noise = stream(seed, NOISE)
        self.delay = stream(seed, DELAY)
        self.env = stream(seed, ENV)
        self.replay = stream(seed, REPLAY)

    def eval_episode(self, round_idx: int, episode: int, kind: int) -> np.random.Generator:
        """Substream for one evaluation episode; ``kind`` is ENV, DELAY or NOISE."""
        return stream(self.seed, EVAL, round_idx, episode, kind)
