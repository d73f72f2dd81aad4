"""
Training on Hallway and evaluating under delay
==============================================

Trains the shipped two-agent config at zero delay, then plays greedy episodes
under increasing channel delay and decodes a few intents.  Pass a smaller
step budget as the first argument for a quick look (the default is the full
100k environment steps, a couple of minutes on one core).
"""

import sys
from pathlib import Path

from codemarl.channel import DelayModel
from codemarl.harness.config import load
from codemarl.harness.runner import report_intents, run_eval, run_train

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 100_000
config = Path(__file__).resolve().parents[1] / "configs" / "hallway.ini"
cfg = load(config).with_overrides({"trainer.total_steps": steps, "log.log_interval": max(steps // 10, 1),
                                   "run.out": "runs/demo"})

result = run_train(cfg)
print(f"{result.env_steps} env steps, {result.train_steps} updates, {result.seconds:.0f}s")
print("learning curve:", result.metrics_path)

# the same starting positions under every delay setting
for r in run_eval(result.final_checkpoint, [DelayModel.parse(s) for s in
                                            ("none", "fixed:1", "fixed:3", "gaussian:3,2", "infinite")], 200):
    print(f"{r.delay:>14}: success {r.success:.3f} +- {r.success_se:.3f}, mean length {r.mean_length:.1f}")

# what do the learned intents say about the next few moves?
report = report_intents(result.final_checkpoint, episodes=20)
print(report.text(limit=12))
