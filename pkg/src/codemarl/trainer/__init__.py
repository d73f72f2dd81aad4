from .learner import Learner, TrainConfig, td_loss, td_targets, total_loss, unroll, vdn_mix
from .net import Ablation, AgentNet, NetSpec, act
from .replay import EpisodeBatch, EpisodeRecord, ReplayBuffer
from .rollout import rollout_episode, rollout_episodes

__all__ = [
    "Ablation",
    "AgentNet",
    "EpisodeBatch",
    "EpisodeRecord",
    "Learner",
    "NetSpec",
    "ReplayBuffer",
    "TrainConfig",
    "act",
    "rollout_episode",
    "rollout_episodes",
    "td_loss",
    "td_targets",
    "total_loss",
    "unroll",
    "vdn_mix",
]
