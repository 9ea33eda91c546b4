"""Run configuration: defaults, validation, and the key=value file format.

A run-config file is plain text, one ``key = value`` per line, ``#`` for
comments.  Keys are TrainConfig field names; values are coerced from the
field's type (``none`` for optional fields, ``true``/``false`` for flags).
Precedence when assembling a run: CLI flag > config file > built-in default.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, fields
from pathlib import Path


class ConfigError(ValueError):
    """Raised for unknown keys, bad values, or inconsistent switches."""


SINGLE_SCALES = (8, 16, 32)
OPTIMIZERS = ("adam", "sgd")


@dataclass
class TrainConfig:
    # metric-learning thresholds (meters) and loss margin
    positive_radius_m: float = 25.0
    negative_radius_m: float = 75.0
    true_positive_radius_m: float = 75.0
    margin: float = 0.1

    # descriptor geometry
    clusters: int = 128
    input_size: int = 256
    base_width: int = 64
    frame_channels: int = 1
    intra_norm: bool = True
    final_norm: bool = True
    upsample: str = "nearest"
    attention_reduction: int = 16

    # event-frame conversion
    window_us: int = 25_000
    window_mode: str = "centered"
    event_normalization: str = "max"

    # optimization
    optimizer: str = "adam"
    learning_rate: float = 1e-4
    weight_decay: float = 0.0
    batch_size: int = 4
    epochs: int = 30
    max_iterations: int | None = None
    negatives_per_query: int = 10
    positives_per_query: int = 10
    cache_refresh_batches: int = 250
    eval_interval_batches: int = 50
    lr_plateau_patience: int = 3
    lr_plateau_factor: float = 0.5
    early_stop_recall1: float | None = None
    seed: int = 0

    # training-time corruption (robustness to one modality failing);
    # disabled for the first aug_warmup_batches so clean structure forms first
    aug_frame_saturate_p: float = 0.0
    aug_event_drop_p: float = 0.0
    aug_warmup_batches: int = 0

    # backbone initialization
    vlad_init: str = "kmeans"  # or "random"
    vlad_init_samples: int = 5000
    pretrained_backbone: str | None = None

    # ablation switches
    frame_only: bool = False
    event_only: bool = False
    single_scale: int | None = None
    no_attention: bool = False
    flatten_concat: bool = False
    max_stats_both_branches: bool = False

    def validate(self) -> "TrainConfig":
        if self.margin <= 0:
            raise ConfigError(f"margin must be positive, got {self.margin}")
        if self.positive_radius_m >= self.negative_radius_m:
            raise ConfigError(
                f"positive radius {self.positive_radius_m} must be below "
                f"negative radius {self.negative_radius_m}"
            )
        if self.clusters < 1:
            raise ConfigError(f"clusters must be >= 1, got {self.clusters}")
        if self.input_size % 32 != 0:
            raise ConfigError(
                f"input_size must be divisible by 32, got {self.input_size}"
            )
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}")
        if self.event_normalization not in ("none", "max", "count"):
            raise ConfigError(f"bad event_normalization {self.event_normalization!r}")
        if self.window_mode not in ("centered", "trailing"):
            raise ConfigError(f"bad window_mode {self.window_mode!r}")
        if self.upsample not in ("nearest", "bilinear"):
            raise ConfigError(f"bad upsample {self.upsample!r}")
        if self.vlad_init not in ("kmeans", "random"):
            raise ConfigError(f"bad vlad_init {self.vlad_init!r}")
        if self.frame_only and self.event_only:
            raise ConfigError("frame_only and event_only are mutually exclusive")
        if self.single_scale is not None and self.single_scale not in SINGLE_SCALES:
            raise ConfigError(
                f"single_scale must be one of {SINGLE_SCALES}, got {self.single_scale}"
            )
        if self.flatten_concat and self.single_scale is not None:
            raise ConfigError("flatten_concat needs all three scales; drop single_scale")
        for name in ("aug_frame_saturate_p", "aug_event_drop_p"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {v}")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _coerce(name: str, text: str, typ) -> object:
    text = text.strip()
    if typ in (int | None, float | None, str | None) and text.lower() in ("none", "null", ""):
        return None
    base = {int | None: int, float | None: float, str | None: str}.get(typ, typ)
    if base is bool:
        if text.lower() in ("true", "1", "yes", "on"):
            return True
        if text.lower() in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {text!r}")
    try:
        if base is int:
            return int(text)
        if base is float:
            return float(text)
    except ValueError:
        raise ConfigError(f"{name}: expected {base.__name__}, got {text!r}") from None
    return text.strip("'\"")


_FIELD_TYPES = {
    "max_iterations": int | None,
    "early_stop_recall1": float | None,
    "single_scale": int | None,
    "pretrained_backbone": str | None,
}


def config_field_type(name: str):
    if name in _FIELD_TYPES:
        return _FIELD_TYPES[name]
    for f in fields(TrainConfig):
        if f.name == name:
            return type(f.default)
    raise ConfigError(f"unknown config key {name!r}")


def _field_names() -> set[str]:
    return {f.name for f in fields(TrainConfig)}


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines into a raw override dict."""
    known = _field_names()
    overrides: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        overrides[key] = _coerce(key, value, config_field_type(key))
    return overrides


def load_config(
    path: str | Path | None = None, overrides: dict | None = None
) -> TrainConfig:
    """Build a validated TrainConfig from an optional file plus overrides."""
    values: dict = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        values.update(parse_config_text(path.read_text(), source=str(path)))
    for key, value in (overrides or {}).items():
        if key not in _field_names():
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(value, str):
            value = _coerce(key, value, config_field_type(key))
        values[key] = value
    return TrainConfig(**values).validate()


def save_config(config: TrainConfig, path: str | Path):
    lines = [f"{f.name} = {getattr(config, f.name)}" for f in fields(TrainConfig)]
    Path(path).write_text("\n".join(lines) + "\n")


def config_to_json(config: TrainConfig) -> str:
    return json.dumps(config.to_dict(), indent=2, sort_keys=True)
