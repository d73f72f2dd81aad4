"""Point-to-point delayed message transport with per-receiver latest-message buffers."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Message:
    sender: int
    intent: np.ndarray
    content: np.ndarray
    timestamp: int

    def __post_init__(self):
        if self.timestamp < 0:
            raise ValueError("message timestamp must be >= 0")


@dataclass(frozen=True)
class DelayModel:
    """Per-edge delay source measured in decision steps.

    ``kind`` is one of ``none`` (same as fixed 0), ``fixed``, ``gaussian``,
    ``infinite``.
    """

    kind: str = "none"
    d_f: int = 0
    mu: float = 0.0
    sigma: float = 0.0

    KINDS = ("none", "fixed", "gaussian", "infinite")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown delay kind {self.kind!r}; expected one of {', '.join(self.KINDS)}")
        if self.kind == "fixed" and self.d_f < 0:
            raise ValueError("fixed delay must be >= 0")
        if self.kind == "gaussian" and self.sigma < 0:
            raise ValueError("gaussian delay sigma must be >= 0")

    @classmethod
    def fixed(cls, d_f: int) -> "DelayModel":
        return cls("fixed", d_f=int(d_f))

    @classmethod
    def gaussian(cls, mu: float, sigma: float) -> "DelayModel":
        return cls("gaussian", mu=float(mu), sigma=float(sigma))

    @classmethod
    def infinite(cls) -> "DelayModel":
        return cls("infinite")

    @classmethod
    def parse(cls, spec: str) -> "DelayModel":
        """Parse ``none | fixed:<int> | gaussian:<mu>,<sigma> | infinite``."""
        text = spec.strip().lower()
        if text in ("none", "infinite"):
            return cls(text)
        kind, _, args = text.partition(":")
        try:
            if kind == "fixed":
                return cls.fixed(int(args))
            if kind == "gaussian":
                mu, sigma = args.split(",")
                return cls.gaussian(float(mu), float(sigma))
        except ValueError:
            pass
        raise ValueError(f"bad delay spec {spec!r}; expected none | fixed:<int> | gaussian:<mu>,<sigma> | infinite")

    def __str__(self) -> str:
        if self.kind == "fixed":
            return f"fixed:{self.d_f}"
        if self.kind == "gaussian":
            return f"gaussian:{self.mu:g},{self.sigma:g}"
        return self.kind

    def sample(self, rng: np.random.Generator) -> float:
        """One delay draw; ``math.inf`` means the message never arrives."""
        if self.kind == "none":
            return 0
        if self.kind == "fixed":
            return self.d_f
        if self.kind == "infinite":
            return math.inf
        return max(0, int(np.rint(rng.normal(self.mu, self.sigma))))


class Channel:
    """Fully connected delayed channel between ``n_agents`` agents for one episode.

    ``broadcast`` schedules a message on every outgoing edge; ``deliver``
    moves everything due by ``t_now`` into the receivers' buffers, keeping
    only the newest timestamp per sender.
    """

    def __init__(self, n_agents: int, model: DelayModel, rng: np.random.Generator | None = None):
        self.n_agents = n_agents
        self.model = model
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.reset()

    def reset(self) -> None:
        self.in_transit: list[tuple[int, int, Message]] = []  # (arrival, receiver, msg)
        self.buffers: list[dict[int, Message]] = [{} for _ in range(self.n_agents)]

    def broadcast(self, msg: Message, t_now: int) -> None:
        if msg.timestamp != t_now:
            raise ValueError(f"message stamped {msg.timestamp} broadcast at step {t_now}")
        for receiver in range(self.n_agents):
            if receiver == msg.sender:
                continue
            d = self.model.sample(self.rng)
            if d == math.inf:
                continue
            self.in_transit.append((t_now + int(d), receiver, msg))

    def deliver(self, t_now: int) -> None:
        pending = []
        for arrival, receiver, msg in self.in_transit:
            if arrival > t_now:
                pending.append((arrival, receiver, msg))
                continue
            held = self.buffers[receiver].get(msg.sender)
            if held is None or msg.timestamp > held.timestamp:
                self.buffers[receiver][msg.sender] = msg
        self.in_transit = pending

    def latest(self, receiver: int, sender: int) -> Message | None:
        return self.buffers[receiver].get(sender)

    def buffer_arrays(self, t_now: int, intent_size: int, content_size: int):
        """Dense view of all buffers for fusion.

        Returns ``(intents [N, N, n], contents [N, N, n_h], present [N, N],
        staleness [N, N])`` indexed ``[receiver, sender]``; absent entries
        are zero with ``present`` False.
        """
        n = self.n_agents
        intents = np.zeros((n, n, intent_size), dtype=np.float32)
        contents = np.zeros((n, n, content_size), dtype=np.float32)
        present = np.zeros((n, n), dtype=bool)
        staleness = np.zeros((n, n), dtype=np.int64)
        for receiver, buf in enumerate(self.buffers):
            for sender, msg in buf.items():
                intents[receiver, sender] = msg.intent
                contents[receiver, sender] = msg.content
                present[receiver, sender] = True
                staleness[receiver, sender] = t_now - msg.timestamp
        return intents, contents, present, staleness
