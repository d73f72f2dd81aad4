"""Command line entry point: ``code {train,eval,ablate,intents,print-config}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..channel import DelayModel
from . import config as cfgmod
from . import runner


def _load_config(args) -> cfgmod.ExperimentConfig:
    cfg = cfgmod.load(args.config) if args.config else cfgmod.ExperimentConfig()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["run.seed"] = args.seed
    if getattr(args, "out", None):
        overrides["run.out"] = args.out
    return cfg.with_overrides(overrides) if overrides else cfg


def _delay(text: str) -> DelayModel:
    try:
        return DelayModel.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def cmd_train(args) -> int:
    cfg = _load_config(args)
    result = runner.run_train(cfg)
    print(f"trained {result.env_steps} env steps / {result.train_steps} updates in {result.seconds:.1f}s")
    print(f"checkpoint: {result.final_checkpoint}")
    print(f"metrics:    {result.metrics_path}")
    return 0


def cmd_eval(args) -> int:
    results = runner.run_eval(args.ckpt, args.delay, args.episodes, args.seed)
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            runner.write_eval(results, fh)
    else:
        runner.write_eval(results, sys.stdout)
    return 0


def cmd_ablate(args) -> int:
    cfg = _load_config(args)
    seeds = [int(s) for s in args.seeds.split(",")]
    variants = args.variants.split(",") if args.variants else None
    if variants:
        unknown = [v for v in variants if v not in runner.ABLATIONS]
        if unknown:
            raise cfgmod.ConfigError(f"unknown ablation variant(s): {', '.join(unknown)}")
    rows = runner.run_ablation(cfg, seeds, variants=variants)
    for row in rows:
        rates = " ".join(f"{k}={v:.3f}" for k, v in row.success.items())
        print(f"{row.variant:20s} {row.config_hash} {rates}")
    print(f"table: {Path(cfg.run.out) / 'ablation.csv'}")
    return 0


def cmd_intents(args) -> int:
    report = runner.report_intents(args.ckpt, args.episodes, args.seed)
    print(report.text(limit=None if args.all else args.limit))
    return 0


def cmd_print_config(args) -> int:
    cfg = cfgmod.load(args.config) if args.config else cfgmod.ExperimentConfig()
    sys.stdout.write(cfgmod.dump(cfg))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="code", description="Delay-tolerant multi-agent communication on Hallway")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train at zero delay, evaluating the delay sweep periodically")
    p.add_argument("--config", help="experiment config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint under delay settings")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--delay", type=_delay, action="append",
                   help="none | fixed:<int> | gaussian:<mu>,<sigma> | infinite (repeatable)")
    p.add_argument("--episodes", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="write CSV here instead of stdout")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train and compare the ablation variants")
    p.add_argument("--config")
    p.add_argument("--seeds", default="0,1,2,3,4", help="comma-separated seeds")
    p.add_argument("--variants", help=f"subset of {','.join(runner.ABLATIONS)}")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("intents", help="decode learned intents into action sequences")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--episodes", type=int, default=50)
    p.add_argument("--seed", type=int)
    p.add_argument("--limit", type=int, default=40, help="states to print")
    p.add_argument("--all", action="store_true", help="print every sampled state")
    p.set_defaults(func=cmd_intents)

    p = sub.add_parser("print-config", help="print the effective config (defaults filled in)")
    p.add_argument("--config")
    p.set_defaults(func=cmd_print_config)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
