from .config import ConfigError, ExperimentConfig
from .runner import evaluate, load_checkpoint, report_intents, run_ablation, run_eval, run_train

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "evaluate",
    "load_checkpoint",
    "report_intents",
    "run_ablation",
    "run_eval",
    "run_train",
]
