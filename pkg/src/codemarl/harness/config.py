"""Experiment configuration files.

Grammar: INI-style sections and ``key = value`` lines; ``#`` starts a comment
line.  Section and key names map to ``<section>.<key>``, e.g.::

    [delay]
    kind = fixed      # none | fixed | gaussian | infinite
    d_f = 3

Lists are comma separated (``track_lengths = 6, 6``); the evaluation sweep is
whitespace separated because gaussian specs contain a comma
(``sweep = none fixed:3 gaussian:5,2 infinite``).  Unknown sections or keys
are rejected.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
import json
import typing
from dataclasses import dataclass, field

from ..channel import DelayModel
from ..env import HallwayConfig
from ..fusion import FusionHyper
from ..intent import IntentHyper
from ..trainer import Ablation, TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunSection:
    seed: int = 0
    out: str = "runs/default"


@dataclass
class AgentSection:
    hidden: int = 64
    q_hidden: int = 64


@dataclass
class DelaySection:
    kind: str = "none"
    d_f: int = 0
    mu: float = 0.0
    sigma: float = 0.0

    def model(self) -> DelayModel:
        return DelayModel(self.kind, d_f=self.d_f, mu=self.mu, sigma=self.sigma)


@dataclass
class EvalSection:
    sweep: list[str] = field(default_factory=lambda: ["none", "fixed:3", "fixed:5", "gaussian:5,2", "infinite"])
    episodes: int = 200
    periodic_episodes: int = 32

    def models(self) -> list[DelayModel]:
        return [DelayModel.parse(s) for s in self.sweep]


@dataclass
class LogSection:
    log_interval: int = 2000
    checkpoint_interval: int = 10000
    train_with_delay: bool = False


@dataclass
class ExperimentConfig:
    run: RunSection = field(default_factory=RunSection)
    env: HallwayConfig = field(default_factory=HallwayConfig)
    delay: DelaySection = field(default_factory=DelaySection)
    eval: EvalSection = field(default_factory=EvalSection)
    agent: AgentSection = field(default_factory=AgentSection)
    intent: IntentHyper = field(default_factory=IntentHyper)
    fusion: FusionHyper = field(default_factory=FusionHyper)
    trainer: TrainConfig = field(default_factory=TrainConfig)
    ablate: Ablation = field(default_factory=Ablation)
    log: LogSection = field(default_factory=LogSection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def hash(self) -> str:
        """Digest of everything that influences results (the output directory excluded)."""
        d = self.to_dict()
        d["run"].pop("out")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def with_overrides(self, overrides: dict[str, object]) -> "ExperimentConfig":
        d = self.to_dict()
        for dotted, value in overrides.items():
            section, _, key = dotted.partition(".")
            if section not in d or key not in d[section]:
                raise ConfigError(f"unknown config key {dotted!r}")
            d[section][key] = value
        return from_dict(d)


SECTIONS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _section_types(section: str) -> dict[str, object]:
    cls = SECTIONS[section].default_factory().__class__
    hints = typing.get_type_hints(cls)
    return {f.name: hints[f.name] for f in dataclasses.fields(cls)}


def _parse_value(text: str, tp, dotted: str, key: str):
    text = text.strip()
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    try:
        if origin is typing.Union or (origin is not None and type(None) in args):
            inner = [a for a in args if a is not type(None)][0]
            if text.lower() in ("", "none", "auto"):
                return None
            return _parse_value(text, inner, dotted, key)
        if origin is list:
            item = args[0]
            parts = text.split() if key == "sweep" else [p for p in text.split(",") if p.strip()]
            return [_parse_value(p, item, dotted, key) for p in parts]
        if tp is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if tp is int:
            return int(text)
        if tp is float:
            return float(text)
        return text
    except (ValueError, IndexError):
        raise ConfigError(f"{dotted}: cannot parse {text!r} as {getattr(tp, '__name__', tp)}") from None


def from_dict(d: dict) -> ExperimentConfig:
    kwargs = {}
    for section, f in SECTIONS.items():
        cls = f.default_factory().__class__
        values = d.get(section, {})
        try:
            kwargs[section] = cls(**values)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{section}] {exc}") from None
    cfg = ExperimentConfig(**kwargs)
    try:
        cfg.eval.models()
        cfg.delay.model()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def parse(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), comment_prefixes=("#",),
                                       interpolation=None, default_section="__none__")
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    d: dict[str, dict] = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        types = _section_types(section)
        d[section] = {}
        for key, raw in parser.items(section):
            if key not in types:
                raise ConfigError(f"unknown config key {section}.{key}")
            d[section][key] = _parse_value(raw, types[key], f"{section}.{key}", key)
    return from_dict(d)


def load(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "auto"
    if isinstance(value, list):
        if value and isinstance(value[0], str):
            return " ".join(value)
        return ", ".join(str(v) for v in value)
    return str(value)


def dump(cfg: ExperimentConfig) -> str:
    out = io.StringIO()
    for section, values in cfg.to_dict().items():
        out.write(f"[{section}]\n")
        for key, value in values.items():
            out.write(f"{key} = {_format_value(value)}\n")
        out.write("\n")
    return out.getvalue()
