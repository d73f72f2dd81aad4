"""Training, evaluation, ablation and intent-report entry points."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..channel import Channel, DelayModel
from ..diffcore import checkpoint
from ..diffcore import rng as rngmod
from ..env import ACTION_NAMES, Hallway, LEFT
from ..intent import decode_intent
from ..trainer import AgentNet, Learner, NetSpec, ReplayBuffer, rollout_episodes
from . import config as cfgmod
from .config import ExperimentConfig

log = logging.getLogger(__name__)

LOSS_COLUMNS = ("loss_rl", "loss_inf", "loss_c", "loss_k", "loss_e", "loss_tot")
LOSS_KEYS = ("rl", "inf", "c", "k", "e", "tot")
RUN_EVAL_ROUND = 1_000_000


def success_column(model: DelayModel) -> str:
    return "success@" + str(model).replace(":", "").replace(",", "_")


def metrics_header(cfg: ExperimentConfig) -> list[str]:
    """Column order of ``metrics.csv``; one ``success@<delay>`` column per sweep entry."""
    return (["step", "episodes", "train_steps", "skipped", "epsilon"] + list(LOSS_COLUMNS)
            + ["mean_ep_len", "train_success"] + [success_column(m) for m in cfg.eval.models()])


def build_net(cfg: ExperimentConfig, rng: np.random.Generator) -> AgentNet:
    probe = Hallway(cfg.env)
    spec = NetSpec(n_agents=cfg.env.n_agents, obs_size=probe.observation_size, n_actions=probe.n_actions,
                   hidden=cfg.agent.hidden, q_hidden=cfg.agent.q_hidden, intent=cfg.intent, fusion=cfg.fusion)
    return AgentNet(spec, rng)


@dataclass
class EvalResult:
    delay: str
    episodes: int
    success: float
    success_se: float
    mean_length: float
    length_se: float


def evaluate(net: AgentNet, cfg: ExperimentConfig, model: DelayModel, episodes: int, seed: int,
             round_idx: int = RUN_EVAL_ROUND) -> EvalResult:
    """Greedy episodes (epsilon 0, intent noise off) under one delay model.

    Episode ``k`` draws its start positions and channel delays from substreams
    keyed by ``(seed, round_idx, k)``, so every delay setting faces the same
    starts.
    """
    N = cfg.env.n_agents
    envs = [Hallway(cfg.env) for _ in range(episodes)]
    env_rngs = [rngmod.stream(seed, rngmod.EVAL, round_idx, k, rngmod.ENV) for k in range(episodes)]
    channels = [Channel(N, model, rngmod.stream(seed, rngmod.EVAL, round_idx, k, rngmod.DELAY)) for k in range(episodes)]
    explore = rngmod.stream(seed, rngmod.EVAL, round_idx, 0, rngmod.EXPLORE)
    records = rollout_episodes(net, envs, channels, env_rngs, 0.0, explore, None, cfg.ablate)
    wins = np.array([r.success for r in records], dtype=np.float64)
    lengths = np.array([r.length for r in records], dtype=np.float64)
    return EvalResult(str(model), episodes, float(wins.mean()), _se(wins), float(lengths.mean()), _se(lengths))


def _se(x: np.ndarray) -> float:
    return float(x.std(ddof=1) / math.sqrt(len(x))) if len(x) > 1 else 0.0


def _fmt(x) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"non-finite metric value {x}")
    return repr(x)


@dataclass
class TrainResult:
    out_dir: Path
    final_checkpoint: Path
    metrics_path: Path
    env_steps: int
    train_steps: int
    seconds: float


def save_checkpoint(path: Path, net: AgentNet, cfg: ExperimentConfig, env_steps: int, train_steps: int) -> None:
    meta = {"config": cfg.to_dict(), "config_hash": cfg.hash(), "env_steps": env_steps, "train_steps": train_steps}
    checkpoint.save(path, net.state_dict(), meta)


def load_checkpoint(path) -> tuple[AgentNet, ExperimentConfig, dict]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    arrays, meta = checkpoint.load(path)
    cfg = cfgmod.from_dict(meta["config"])
    net = build_net(cfg, rngmod.stream(cfg.run.seed, rngmod.INIT))
    net.load_state_dict(arrays)
    return net, cfg, meta


def run_train(cfg: ExperimentConfig, out_dir=None) -> TrainResult:
    """Train at zero delay, evaluating the delay sweep at every log interval."""
    started = time.perf_counter()
    out = Path(out_dir or cfg.run.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(cfgmod.dump(cfg), encoding="utf-8")

    tc, lc = cfg.trainer, cfg.log
    streams = rngmod.Streams(cfg.run.seed)
    net = build_net(cfg, streams.init)
    target = build_net(cfg, streams.init)
    learner = Learner(net, target, tc, cfg.ablate, streams.noise, streams.replay)

    envs = [Hallway(cfg.env) for _ in range(tc.n_envs)]
    N = cfg.env.n_agents
    buffer = ReplayBuffer(tc.buffer_size, cfg.env.max_steps, N, envs[0].observation_size, envs[0].state_size)
    train_model = cfg.delay.model() if lc.train_with_delay else DelayModel("none")
    channels = [Channel(N, train_model, streams.delay) for _ in envs]
    sweep = cfg.eval.models()

    metrics_path = out / "metrics.csv"
    fh = open(metrics_path, "w", newline="", encoding="utf-8")
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(metrics_header(cfg))
    fh.flush()

    env_steps = episodes = 0
    next_log, next_ckpt, row_idx = lc.log_interval, lc.checkpoint_interval, 0
    acc_losses = {k: 0.0 for k in LOSS_KEYS}
    acc_updates = acc_eps = acc_len = acc_wins = 0
    try:
        while env_steps < tc.total_steps:
            epsilon = tc.epsilon(env_steps)
            records = rollout_episodes(net, envs, channels, [streams.env] * len(envs), epsilon,
                                       streams.explore, streams.noise, cfg.ablate)
            for rec in records:
                buffer.insert(rec)
                env_steps += rec.length
                episodes += 1
                acc_eps += 1
                acc_len += rec.length
                acc_wins += rec.success
            for _ in range(tc.updates_per_rollout):
                m = learner.train_step(buffer)
                if m is not None:
                    acc_updates += 1
                    for k in LOSS_KEYS:
                        acc_losses[k] += m[k]

            while env_steps >= next_log and next_log <= tc.total_steps:
                row_idx += 1
                evals = [evaluate(net, cfg, model, cfg.eval.periodic_episodes, cfg.run.seed, row_idx).success
                         for model in sweep]
                denom = max(acc_updates, 1)
                row = ([next_log, episodes, learner.train_steps, learner.skipped, epsilon]
                       + [acc_losses[k] / denom for k in LOSS_KEYS]
                       + [acc_len / max(acc_eps, 1), acc_wins / max(acc_eps, 1)] + evals)
                writer.writerow([str(v) if isinstance(v, int) else _fmt(v) for v in row])
                fh.flush()
                log.info("step %d: loss_tot %.4f success %s", next_log, acc_losses["tot"] / denom,
                         " ".join(f"{s:.2f}" for s in evals))
                acc_losses = {k: 0.0 for k in LOSS_KEYS}
                acc_updates = acc_eps = acc_len = acc_wins = 0
                next_log += lc.log_interval

            if lc.checkpoint_interval > 0 and env_steps >= next_ckpt:
                save_checkpoint(out / "checkpoint.bin", net, cfg, env_steps, learner.train_steps)
                while next_ckpt <= env_steps:
                    next_ckpt += lc.checkpoint_interval
    finally:
        fh.close()

    final = out / "final.bin"
    save_checkpoint(final, net, cfg, env_steps, learner.train_steps)
    return TrainResult(out, final, metrics_path, env_steps, learner.train_steps, time.perf_counter() - started)


def run_eval(ckpt, delays: list[DelayModel] | None = None, episodes: int | None = None,
             seed: int | None = None) -> list[EvalResult]:
    """Evaluate a checkpoint under each delay setting; the checkpoint file is only read."""
    net, cfg, _ = load_checkpoint(ckpt)
    delays = delays if delays else [cfg.delay.model()]
    episodes = episodes or cfg.eval.episodes
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    seed = cfg.run.seed if seed is None else seed
    return [evaluate(net, cfg, model, episodes, seed) for model in delays]


EVAL_COLUMNS = ["delay", "episodes", "success", "success_se", "mean_length", "length_se"]


def write_eval(results: list[EvalResult], fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(EVAL_COLUMNS)
    for r in results:
        writer.writerow([r.delay, r.episodes, _fmt(r.success), _fmt(r.success_se), _fmt(r.mean_length),
                         _fmt(r.length_se)])


ABLATIONS: dict[str, dict[str, bool]] = {
    "full": {},
    "no_ia": {"ablate.no_ia": True},
    "no_ta": {"ablate.no_ta": True},
    "no_da": {"ablate.no_ia": True, "ablate.no_ta": True},
    "no_inference_loss": {"ablate.no_inference_loss": True},
    "no_continuity_loss": {"ablate.no_continuity_loss": True},
    "no_both_losses": {"ablate.no_inference_loss": True, "ablate.no_continuity_loss": True},
}


def variant_config(cfg: ExperimentConfig, variant: str, seed: int, out: Path) -> ExperimentConfig:
    overrides = dict(ABLATIONS[variant])
    overrides["run.seed"] = seed
    overrides["run.out"] = str(out)
    return cfg.with_overrides(overrides)


@dataclass
class AblationRow:
    variant: str
    config_hash: str
    seeds: list[int]
    success: dict[str, float]       # delay -> mean success over seeds
    gap: dict[str, float]           # delay -> full minus this variant


def run_ablation(cfg: ExperimentConfig, seeds: list[int], out_dir=None, variants: list[str] | None = None,
                 train=run_train) -> list[AblationRow]:
    """Train and evaluate every ablation variant on every seed; write ``ablation.csv``."""
    out = Path(out_dir or cfg.run.out)
    out.mkdir(parents=True, exist_ok=True)
    variants = variants or list(ABLATIONS)
    sweep = cfg.eval.models()
    per_seed_path = out / "ablation_runs.csv"
    per_seed = {}
    with open(per_seed_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["variant", "seed"] + [success_column(m) for m in sweep])
        for variant in variants:
            for seed in seeds:
                vcfg = variant_config(cfg, variant, seed, out / variant / f"seed{seed}")
                result = train(vcfg)
                net, _, _ = load_checkpoint(result.final_checkpoint)
                rates = [evaluate(net, vcfg, m, cfg.eval.episodes, seed).success for m in sweep]
                per_seed[(variant, seed)] = rates
                writer.writerow([variant, seed] + [_fmt(r) for r in rates])
                fh.flush()

    rows = []
    full_means = None
    if "full" in variants:
        full_means = np.mean([per_seed[("full", s)] for s in seeds], axis=0)
    for variant in variants:
        means = np.mean([per_seed[(variant, s)] for s in seeds], axis=0)
        vhash = variant_config(cfg, variant, cfg.run.seed, out).hash()
        gap = {str(m): float(full_means[i] - means[i]) if full_means is not None else float("nan")
               for i, m in enumerate(sweep)}
        rows.append(AblationRow(variant, vhash, list(seeds), {str(m): float(v) for m, v in zip(sweep, means)}, gap))

    with open(out / "ablation.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["variant", "config_hash", "seeds"] + [success_column(m) for m in sweep]
                        + ["gap_" + success_column(m) for m in sweep])
        for row in rows:
            writer.writerow([row.variant, row.config_hash, " ".join(map(str, row.seeds))]
                            + [_fmt(row.success[str(m)]) for m in sweep]
                            + [_fmt(row.gap[str(m)]) for m in sweep])
    return rows


@dataclass
class IntentSample:
    episode: int
    t: int
    agent: int
    position: int
    decoded: list[int]
    realized: list[int]


@dataclass
class IntentReport:
    K: int
    samples: list[IntentSample]
    agreement: float                 # decoded first action == realized action, fraction

    def text(self, limit: int | None = 40) -> str:
        lines = [f"intent decoding report: K={self.K}, {len(self.samples)} sampled states"]
        shown = self.samples if limit is None else self.samples[:limit]
        for s in shown:
            dec = " ".join(ACTION_NAMES[a] for a in s.decoded)
            real = " ".join(ACTION_NAMES[a] for a in s.realized)
            lines.append(f"ep {s.episode:3d} t {s.t:2d} agent {s.agent} pos {s.position}: "
                         f"decoded [{dec}] realized [{real}]")
        if limit is not None and len(self.samples) > limit:
            lines.append(f"... {len(self.samples) - limit} more states")
        lines.append(f"next-step agreement: {100.0 * self.agreement:.1f}%")
        return "\n".join(lines)


def report_intents(ckpt, episodes: int = 50, seed: int | None = None, delay: DelayModel | None = None) -> IntentReport:
    """Decode each agent's intent at every visited state and compare with what it then did."""
    net, cfg, _ = load_checkpoint(ckpt)
    seed = cfg.run.seed if seed is None else seed
    model = delay or DelayModel("none")
    N, A, K = cfg.env.n_agents, net.spec.n_actions, cfg.intent.K
    envs = [Hallway(cfg.env) for _ in range(episodes)]
    env_rngs = [rngmod.stream(seed, rngmod.EVAL, RUN_EVAL_ROUND + 1, k, rngmod.ENV) for k in range(episodes)]
    channels = [Channel(N, model, rngmod.stream(seed, rngmod.EVAL, RUN_EVAL_ROUND + 1, k, rngmod.DELAY))
                for k in range(episodes)]
    explore = rngmod.stream(seed, rngmod.EVAL, RUN_EVAL_ROUND + 1, 0, rngmod.EXPLORE)
    records = rollout_episodes(net, envs, channels, env_rngs, 0.0, explore, None, cfg.ablate, keep_internals=True)

    keys, hs, es, obs_seqs, prevs = [], [], [], [], []
    for ep, rec in enumerate(records):
        for t in range(rec.length):
            for i in range(N):
                keys.append((ep, t, i))
                hs.append(rec.internals["h"][t, i])
                es.append(rec.internals["e"][t, i])
                window = [rec.obs[min(t + k, rec.length), i] for k in range(K)]
                obs_seqs.append(window)
                prevs.append(A if t == 0 else rec.actions[t - 1, i])
    if not keys:
        return IntentReport(K, [], 0.0)
    obs_seq = np.stack(obs_seqs, axis=1)                    # [K, M, obs]
    decoded = decode_intent(net.predictor, np.stack(es), np.stack(hs), obs_seq, np.array(prevs))
    samples, hits = [], 0
    for m, (ep, t, i) in enumerate(keys):
        rec = records[ep]
        realized = [int(a) for a in rec.actions[t:min(t + K, rec.length), i]]
        dec = [int(a) for a in decoded[:, m]]
        hits += dec[0] == realized[0]
        samples.append(IntentSample(ep, t, i, int(rec.internals["positions"][t, i]), dec, realized))
    return IntentReport(K, samples, hits / len(samples))


def left_majority(report: IntentReport, min_position: int = 3) -> tuple[int, int]:
    """Among states at least ``min_position`` from the goal, count those whose decoded sequence is mostly Left."""
    far = [s for s in report.samples if s.position >= min_position]
    mostly_left = sum(1 for s in far if sum(a == LEFT for a in s.decoded) * 2 > len(s.decoded))
    return mostly_left, len(far)

