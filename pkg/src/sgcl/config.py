"""Run configuration: nested dataclasses read from a flat ``key = value`` file.

Keys are dotted (``encoder.hidden_dim = 64``); the top-level ``seed`` feeds
every random stream of a run. Defaults encode the published hyperparameters
plus documented choices for values that were tuned but never reported.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from sgcl.downstream import RegimeKind, TrainRegime
from sgcl.encoder import EncoderConfig
from sgcl.pretrain import AugmentConfig, PretrainConfig
from sgcl.synthgen import GeneratorConfig


class ConfigError(ValueError):
    pass


@dataclass
class SynthSettings:
    count_train: int = 2000
    count_test: int = 500
    distractor_min: int = 1
    distractor_max: int = 6
    state_flip_prob: float = 0.1
    class_distribution: tuple[float, ...] = (1 / 7,) * 7


@dataclass
class TrainOverrides:
    """Per-run overrides of the regime defaults; None keeps the default."""

    epochs: int | None = None
    batch_size: int | None = None
    lr: float | None = None
    weight_decay: float | None = None


@dataclass
class RunConfig:
    seed: int = 0
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    train: TrainOverrides = field(default_factory=TrainOverrides)
    synth: SynthSettings = field(default_factory=SynthSettings)

    def __post_init__(self):
        self.apply_seed()

    def apply_seed(self) -> None:
        self.augment.seed = self.seed
        self.pretrain.seed = self.seed

    def regime(self, kind: RegimeKind | str) -> TrainRegime:
        regime = TrainRegime.default(kind, self.seed)
        for f in dataclasses.fields(TrainOverrides):
            value = getattr(self.train, f.name)
            if value is not None:
                setattr(regime, f.name, value)
        return regime

    def generator(self, seed_offset: int = 0) -> GeneratorConfig:
        return GeneratorConfig(
            n=self.encoder.seq_len,
            class_distribution=tuple(self.synth.class_distribution),
            distractor_range=(self.synth.distractor_min, self.synth.distractor_max),
            state_flip_prob=self.synth.state_flip_prob,
            seed=self.seed + seed_offset,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_SECTIONS = ("encoder", "augment", "pretrain", "train", "synth")


def _convert(raw: str, current, key: str):
    raw = raw.strip()
    try:
        if isinstance(current, bool):
            if raw.lower() not in ("true", "false", "1", "0"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1")
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        if isinstance(current, tuple):
            return tuple(float(v) for v in raw.split(","))
        if current is None:
            if raw.lower() == "none":
                return None
            return int(raw) if raw.lstrip("-").isdigit() else float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return raw


def set_value(cfg: RunConfig, key: str, raw: str) -> None:
    parts = key.strip().split(".")
    if parts == ["seed"]:
        cfg.seed = _convert(raw, 0, key)
        return
    if len(parts) != 2 or parts[0] not in _SECTIONS:
        raise ConfigError(f"unknown config key {key!r}")
    section = getattr(cfg, parts[0])
    names = {f.name for f in dataclasses.fields(section)}
    if parts[1] not in names or parts[1] == "seed":
        raise ConfigError(f"unknown config key {key!r}")
    setattr(section, parts[1], _convert(raw, getattr(section, parts[1]), key))


def parse_lines(cfg: RunConfig, lines) -> None:
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key = value")
        key, raw = line.split("=", 1)
        set_value(cfg, key, raw)


def load_config(path: str | Path | None = None, overrides: list[str] | tuple[str, ...] = ()) -> RunConfig:
    """Defaults, then the config file, then ``key=value`` overrides (last wins)."""
    cfg = RunConfig()
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        parse_lines(cfg, p.read_text().splitlines())
    parse_lines(cfg, overrides)
    try:
        # re-run validation of every section after mutation
        for name in _SECTIONS:
            section = getattr(cfg, name)
            if hasattr(section, "__post_init__"):
                section.__post_init__()
        cfg.generator()
    except ValueError as err:
        raise ConfigError(str(err)) from None
    cfg.apply_seed()
    return cfg
