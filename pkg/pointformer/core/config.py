"""Configuration loader for PointFormer."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml
from dotenv import load_dotenv

from pointformer.core.errors import ConfigError

PROFILES = ("tiny", "vitb")


@dataclass
class GeometryConfig:
    n_points: int = 1024
    n_groups: int = 128
    k: int = 32
    bits_per_axis: int = 10
    sequencer: bool = True
    feature_channels: int = 0

    def validate(self) -> None:
        if self.n_groups < 1 or self.k < 1:
            raise ConfigError("geometry.n_groups and geometry.k must be >= 1")
        if self.n_points < 0:
            raise ConfigError("geometry.n_points must be >= 0 (0 keeps clouds as loaded)")
        if self.n_points and max(self.n_groups, self.k) > self.n_points:
            raise ConfigError(
                f"geometry.n_groups ({self.n_groups}) and k ({self.k}) "
                f"must not exceed n_points ({self.n_points})"
            )
        if not 1 <= self.bits_per_axis <= 21:
            raise ConfigError(
                f"geometry.bits_per_axis must be in [1, 21], got {self.bits_per_axis}"
            )
        if self.feature_channels < 0:
            raise ConfigError("geometry.feature_channels must be >= 0")


@dataclass
class BackboneConfig:
    depth: int = 12
    width: int = 768
    heads: int = 12
    mlp_ratio: float = 4.0
    d_hat: int = 64
    scale: float = 0.1
    use_pos_embed: bool = True
    max_tokens: int = 197
    use_adapters: bool = True

    @property
    def head_width(self) -> int:
        return self.width // self.heads

    @property
    def mlp_hidden(self) -> int:
        return int(self.width * self.mlp_ratio)

    def validate(self) -> None:
        if self.depth < 1:
            raise ConfigError("backbone.depth (L) must be >= 1")
        if self.heads < 1 or self.width % self.heads != 0:
            raise ConfigError(
                f"backbone.width ({self.width}) must be divisible by heads ({self.heads})"
            )
        if not 1 <= self.d_hat < self.width:
            raise ConfigError(f"backbone.d_hat must satisfy 1 <= d_hat < {self.width}")
        if self.max_tokens < 1:
            raise ConfigError("backbone.max_tokens must be >= 1")


@dataclass
class EmbedConfig:
    mode: str = "pointnet"  # pointnet | rpn
    hidden: tuple[int, ...] = (64, 128)
    seed: int = 0
    trainable: bool | None = None  # None follows mode

    def validate(self) -> None:
        if self.mode not in ("pointnet", "rpn"):
            raise ConfigError(f"embed.mode must be 'pointnet' or 'rpn', got {self.mode!r}")
        if self.trainable is not None and self.trainable != (self.mode == "pointnet"):
            raise ConfigError(
                f"embed.trainable={self.trainable} conflicts with embed.mode={self.mode!r}"
            )

    @property
    def is_trainable(self) -> bool:
        return self.mode == "pointnet"


@dataclass
class HeadConfig:
    task: str = "classification"  # classification | segmentation
    num_classes: int = 40
    num_parts: int = 50
    taps: tuple[int, ...] | None = None
    fusion_widths: tuple[int, ...] = (256,)
    point_widths: tuple[int, ...] = (128,)

    def validate(self) -> None:
        if self.task not in ("classification", "segmentation"):
            raise ConfigError(f"heads.task must be classification|segmentation, got {self.task!r}")
        if self.num_classes < 2:
            raise ConfigError("heads.num_classes must be >= 2")
        if self.num_parts < 2:
            raise ConfigError("heads.num_parts must be >= 2")


@dataclass
class TrainConfig:
    lr_max: float = 5e-4
    lr_min: float = 0.0
    weight_decay: float = 5e-2
    epochs: int = 300
    batch_size: int = 32
    seed: int = 0
    betas: tuple[float, float] = (0.9, 0.999)
    adam_epsilon: float = 1e-8
    # Execution is always single-threaded and seeded, so runs repeat bit for bit
    # either way; the flag is only recorded in run.json.
    deterministic: bool = True

    def validate(self) -> None:
        if self.lr_min < 0 or self.lr_max < self.lr_min:
            raise ConfigError("train: require lr_max >= lr_min >= 0")
        if self.epochs < 1:
            raise ConfigError("train.epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("train.batch_size must be >= 1")


@dataclass
class EpisodeSpec:
    n_way: int = 5
    k_shot: int = 10
    test_per_class: int = 20
    repeats: int = 10
    seed: int = 0

    def validate(self) -> None:
        if self.n_way < 2:
            raise ConfigError("fewshot.n_way must be >= 2")
        if self.k_shot < 1:
            raise ConfigError("fewshot.k_shot must be >= 1")
        if self.test_per_class < 1 or self.repeats < 1:
            raise ConfigError("fewshot.test_per_class and fewshot.repeats must be >= 1")


@dataclass
class SystemConfig:
    log_level: str = "INFO"
    profile: str = "vitb"


@dataclass
class PointFormerConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    embed: EmbedConfig = field(default_factory=EmbedConfig)
    heads: HeadConfig = field(default_factory=HeadConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    fewshot: EpisodeSpec = field(default_factory=EpisodeSpec)
    system: SystemConfig = field(default_factory=SystemConfig)

    def validate(self) -> None:
        self.geometry.validate()
        self.backbone.validate()
        self.embed.validate()
        self.heads.validate()
        self.train.validate()
        self.fewshot.validate()
        if self.backbone.use_pos_embed and self.geometry.n_groups + 1 > self.backbone.max_tokens:
            raise ConfigError(
                f"geometry.n_groups + 1 = {self.geometry.n_groups + 1} exceeds "
                f"backbone.max_tokens = {self.backbone.max_tokens}"
            )
        if self.heads.taps is not None:
            taps = list(self.heads.taps)
            if any(t < 1 or t > self.backbone.depth for t in taps) or taps != sorted(set(taps)):
                raise ConfigError(
                    f"heads.taps must be strictly increasing within [1, {self.backbone.depth}]"
                )


# Overlays applied on top of the dataclass defaults; YAML values win over these.
_PROFILE_OVERLAYS: dict[str, dict[str, dict[str, Any]]] = {
    "tiny": {
        "geometry": {"n_points": 256, "n_groups": 32, "k": 16},
        "backbone": {"depth": 4, "width": 64, "heads": 4, "d_hat": 8, "max_tokens": 65},
        "heads": {"fusion_widths": (64,), "point_widths": (32,)},
        "train": {"batch_size": 16},
    },
    "vitb": {},
}


def default_config(profile: str = "vitb") -> PointFormerConfig:
    """Return the defaults for *profile* without touching the filesystem."""
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; expected one of {PROFILES}")
    config = PointFormerConfig()
    _apply_sections(config, _PROFILE_OVERLAYS[profile], source=f"profile {profile}")
    config.system.profile = profile
    return config


def load_config(path: str | None = None, profile: str | None = None) -> PointFormerConfig:
    """Load configuration from a YAML file and .env, returning a PointFormerConfig.

    Precedence (lowest first): dataclass defaults, profile overlay, YAML file,
    environment (``POINTFORMER_SEED``, ``POINTFORMER_LOG_LEVEL``).
    """
    load_dotenv()

    raw: dict = {}
    if path is not None:
        if not Path(path).exists():
            raise ConfigError(f"config file not found: {path}")
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
    else:
        default_path = Path(__file__).parent.parent.parent / "config" / "pointformer_config.yaml"
        if default_path.exists():
            with open(default_path) as fh:
                raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ConfigError("config file must contain a mapping of sections")

    sys_raw = raw.get("system", {}) or {}
    chosen = profile or sys_raw.get("profile", "vitb")
    config = default_config(chosen)
    _apply_sections(config, raw, source=path or "default config")
    config.system.profile = chosen

    if seed := os.environ.get("POINTFORMER_SEED"):
        config.train.seed = int(seed)
    if level := os.environ.get("POINTFORMER_LOG_LEVEL"):
        config.system.log_level = level

    config.validate()
    return config


def config_to_dict(config: PointFormerConfig) -> dict[str, Any]:
    """Resolved config as plain JSON-friendly data (tuples become lists)."""
    return dataclasses.asdict(config)


def _apply_sections(config: PointFormerConfig, raw: dict, source: str) -> None:
    sections = {f.name for f in dataclasses.fields(config)}
    for section, values in raw.items():
        if section not in sections:
            raise ConfigError(f"{source}: unknown config section {section!r}")
        if values is None:
            continue
        if not isinstance(values, dict):
            raise ConfigError(f"{source}: section {section!r} must be a mapping")
        target = getattr(config, section)
        known = {f.name: f for f in dataclasses.fields(target)}
        for key, value in values.items():
            if key not in known:
                raise ConfigError(f"{source}: unknown config key {section}.{key}")
            setattr(target, key, _coerce(getattr(target, key), value, f"{section}.{key}"))


def _coerce(current: Any, value: Any, name: str) -> Any:
    """Coerce *value* to the type of the current default."""
    try:
        if value is None:
            return None
        if isinstance(current, bool):
            if isinstance(value, str):
                return value.strip().lower() in ("1", "true", "yes", "on")
            return bool(value)
        if isinstance(current, int):
            return int(value)
        if isinstance(current, float):
            return float(value)
        if isinstance(current, tuple) or current is None and isinstance(value, (list, tuple)):
            return tuple(value)
        if isinstance(current, str):
            return str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid value for {name}: {value!r}") from exc
    return value
