"""Run configuration: one nested JSON document, overridable by dotted flags."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from . import CLASSES
from .features import FeatureConfig, MaskParams
from .synthgen import SynthConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class CodecConfig:
    threshold: float = 0.5
    merge_gap_s: float = 0.3
    min_dur_s: float = 0.1
    n_bins: int = 9


@dataclass
class MetricsConfig:
    segment_len_s: float = 1.0


@dataclass
class ModelConfig:
    width_divisor: int = 1
    dropout_rate: float = 0.1


@dataclass
class XDomainConfig:
    sources: list = field(default_factory=lambda: ["clean", "vehicle_-9dB", "outdoor_-9dB", "indoor_-9dB"])
    targets: list = field(default_factory=lambda: ["clean", "vehicle_-9dB", "outdoor_-9dB", "indoor_-9dB"])
    seeds: list = field(default_factory=lambda: [0])


@dataclass
class PathsConfig:
    data: str = "data"
    features: str = "features"
    runs: str = "runs"
    reports: str = "reports"


@dataclass
class RunConfig:
    classes: list = field(default_factory=lambda: list(CLASSES))
    features: FeatureConfig = field(default_factory=FeatureConfig)
    augment: MaskParams = field(default_factory=MaskParams)
    train: TrainConfig = field(default_factory=TrainConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    codec: CodecConfig = field(default_factory=CodecConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    xdomain: XDomainConfig = field(default_factory=XDomainConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _coerce(value: Any, default: Any, key: str):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true/false, got {value!r}")
        return value
    if isinstance(default, float) and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if isinstance(default, int) and isinstance(value, int) and not isinstance(value, bool):
        return value
    if isinstance(default, (list, dict, str)) and isinstance(value, type(default)):
        return value
    raise ConfigError(f"{key}: expected {type(default).__name__}, got {value!r}")


def _build(cls, doc: dict, prefix: str = ""):
    if not isinstance(doc, dict):
        raise ConfigError(f"{prefix or 'config'}: expected an object")
    defaults = cls()
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(doc) - names)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(prefix + k for k in unknown)}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in doc:
            continue
        current = getattr(defaults, f.name)
        if dataclasses.is_dataclass(current):
            kwargs[f.name] = _build(type(current), doc[f.name], f"{prefix}{f.name}.")
        else:
            kwargs[f.name] = _coerce(doc[f.name], current, prefix + f.name)
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{prefix or 'config'}: {exc}") from exc


def from_dict(doc: dict) -> RunConfig:
    return _build(RunConfig, doc)


def leaf_keys(cls=RunConfig, prefix: str = "") -> list[tuple[str, Any]]:
    """Dotted path and default for every scalar setting."""
    out = []
    defaults = cls()
    for f in dataclasses.fields(cls):
        value = getattr(defaults, f.name)
        if dataclasses.is_dataclass(value):
            out += leaf_keys(type(value), f"{prefix}{f.name}.")
        else:
            out.append((prefix + f.name, value))
    return out


def parse_override(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(doc: dict, overrides: dict[str, Any]) -> dict:
    doc = json.loads(json.dumps(doc))
    for dotted, value in overrides.items():
        node = doc
        *parents, leaf = dotted.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    return doc


def load_config(path=None, overrides: dict[str, Any] | None = None) -> RunConfig:
    doc = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return from_dict(apply_overrides(doc, overrides or {}))
