"""Run configuration: sections, file loading, dotted overrides and experiment presets."""
from __future__ import annotations

import dataclasses
import json
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from .datagen import DataConfig
from .dsp import StftConfig
from .embedder import EmbedderConfig
from .errors import ConfigError
from .losses import LossConfig
from .model import ModelConfig
from .trainer import TrainConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SECTIONS = {
    "stft": StftConfig,
    "model": ModelConfig,
    "loss": LossConfig,
    "train": TrainConfig,
    "data": DataConfig,
    "embedder": EmbedderConfig,
}


@dataclass(frozen=True)
class RunConfig:
    stft: StftConfig = field(default_factory=StftConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    embedder: EmbedderConfig = field(default_factory=EmbedderConfig)

    def __post_init__(self):
        if self.model.freq_bins != self.stft.num_bins:
            raise ConfigError(
                f"model.freq_bins={self.model.freq_bins} does not match the STFT's {self.stft.num_bins} bins"
            )
        if self.train.mode != "supervised" and self.model.num_decoder_branches != 3:
            raise ConfigError(f"{self.train.mode} training needs model.num_decoder_branches = 3")
        if self.train.loss != self.loss:
            object.__setattr__(self, "train", replace(self.train, loss=self.loss))

    def to_dict(self) -> dict:
        out = {}
        for name in SECTIONS:
            section = getattr(self, name)
            d = section.to_dict() if hasattr(section, "to_dict") else dataclasses.asdict(section)
            d.pop("loss", None)
            out[name] = _jsonable(d)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def _field_names(cls) -> set[str]:
    return {f.name for f in dataclasses.fields(cls)} - ({"loss"} if cls is TrainConfig else set())


def _coerce(cls, values: dict, section: str) -> Any:
    unknown = set(values) - _field_names(cls)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {sorted(unknown)}")
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigError(f"[{section}]: {exc}") from exc


def from_dict(d: dict, base: RunConfig | None = None) -> RunConfig:
    """Build a config from nested sections, starting from ``base`` (defaults when None)."""
    unknown = set(d) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
    base_d = (base or RunConfig()).to_dict()
    parts = {}
    for name, cls in SECTIONS.items():
        values = dict(base_d[name])
        given = d.get(name, {})
        if not isinstance(given, dict):
            raise ConfigError(f"section [{name}] must be a table")
        unknown_keys = set(given) - _field_names(cls)
        if unknown_keys:
            raise ConfigError(f"unknown key(s) in [{name}]: {sorted(unknown_keys)}")
        values.update(given)
        parts[name] = _coerce(cls, values, name)
    return RunConfig(**parts)


def load_file(path: str | Path) -> dict:
    path = Path(path)
    try:
        text = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix == ".json":
            return json.loads(text)
        return tomllib.loads(text.decode())
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc


def parse_override(item: str) -> tuple[str, str, Any]:
    """``section.key=value``; the value is read as JSON when possible, else kept as a string."""
    key, sep, raw = item.partition("=")
    section, dot, name = key.strip().partition(".")
    if not sep or not dot or not name:
        raise ConfigError(f"override must look like section.key=value, got {item!r}")
    try:
        value = json.loads(raw)
    except ValueError:
        value = raw
    return section, name, value


def apply_overrides(cfg: RunConfig, items: list[str]) -> RunConfig:
    patch: dict[str, dict] = {}
    for item in items:
        section, name, value = parse_override(item)
        patch.setdefault(section, {})[name] = value
    return from_dict(patch, cfg) if patch else cfg


# ---------------------------------------------------------------------------
# presets

_SUPERVISED = {"train": {"mode": "supervised"}, "model": {"num_decoder_branches": 1}}
_UNSUPERVISED = {"train": {"mode": "unsupervised"}, "model": {"num_decoder_branches": 3}}
_SEMI = {
    "train": {"mode": "semi_supervised"},
    "model": {"num_decoder_branches": 3},
    "data": {"target_policy": "windowed_rir_target"},
}


def _merge(*dicts: dict) -> dict:
    out: dict[str, dict] = {}
    for d in dicts:
        for section, values in d.items():
            out.setdefault(section, {}).update(values)
    return out


PRESETS: dict[str, dict] = {
    # supervised on noisy recordings used as their own targets
    "exp1": _merge(_SUPERVISED, {"data": {"supervised_source": "noisy", "target_policy": "noisy_target"}}),
    # supervised on clean (+ reverb) speech, early-reverb target
    "exp2": _merge(_SUPERVISED, {"data": {"target_policy": "windowed_rir_target"}}),
    # supervised on clean (+ reverb) speech, reverberant target
    "exp3": _merge(_SUPERVISED, {"data": {"target_policy": "reverberant_target"}}),
    "exp4": _merge(_UNSUPERVISED, {"loss": {"alpha_e": 0.0, "alpha_d": 0.0}}),
    "exp5": _merge(_UNSUPERVISED, {"loss": {"alpha_e": 0.004, "alpha_d": 0.0}}),
    "exp6": _merge(_UNSUPERVISED, {"loss": {"alpha_e": 0.0, "alpha_d": 0.0005}}),
    "exp7": _merge(_UNSUPERVISED, {"loss": {"alpha_e": 0.004, "alpha_d": 0.0005}}),
    "exp8": _merge(_SEMI, {"loss": {"alpha_e": 0.004, "alpha_d": 0.0}}),
    "exp9": _merge(_SEMI, {"loss": {"alpha_e": 0.004, "alpha_d": 0.0005}}),
}


def preset(name: str, base: RunConfig | None = None) -> RunConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {sorted(PRESETS)}")
    d = _merge(PRESETS[name], {"train": {"exp_id": name}})
    return from_dict(d, base)


def resolve(config_path: str | None = None, preset_name: str | None = None, overrides: list[str] | None = None) -> RunConfig:
    """Defaults, then the config file, then the preset, then command-line overrides."""
    cfg = RunConfig()
    if config_path:
        cfg = from_dict(load_file(config_path), cfg)
    if preset_name:
        cfg = preset(preset_name, cfg)
    return apply_overrides(cfg, overrides or [])
