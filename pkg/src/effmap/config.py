"""Experiment configuration: one JSON file drives the whole pipeline."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

from .errors import ConfigError
from .phantom import PhantomConfig
from .tinynn import ModelConfig, TrainConfig


@dataclass(frozen=True)
class BaselineConfig:
    reg_error_mm: float = 2.0
    reg_error_smoothness_mm: float = 16.0

    def validate(self) -> None:
        if self.reg_error_mm < 0:
            raise ConfigError("reg_error_mm must be >= 0")
        if self.reg_error_smoothness_mm <= 0:
            raise ConfigError("reg_error_smoothness_mm must be > 0")


@dataclass(frozen=True)
class FoldConfig:
    k: int = 5
    val_frac: float = 0.10

    def validate(self) -> None:
        if self.k < 2:
            raise ConfigError("k must be >= 2")
        if not (0 < self.val_frac < 1):
            raise ConfigError("val_frac must be in (0, 1)")


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 42
    phantom: PhantomConfig = field(default_factory=PhantomConfig)
    folds: FoldConfig = field(default_factory=FoldConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    patch_size: int = 51
    patch_encoding: str = "scaled"
    map_stride: int = 2

    def validate(self) -> None:
        from .patchset import ENCODING_CHANNELS

        if self.patch_size % 2 == 0 or self.patch_size < 3:
            raise ConfigError(f"patch_size must be odd and >= 3, got {self.patch_size}")
        if self.map_stride < 1:
            raise ConfigError("map_stride must be >= 1")
        if self.patch_encoding not in ENCODING_CHANNELS:
            raise ConfigError(f"unknown patch_encoding {self.patch_encoding!r}")
        self.phantom.validate()
        self.folds.validate()
        self.model.validate()
        self.train.validate()
        self.baseline.validate()
        expected = ENCODING_CHANNELS[self.patch_encoding]
        if self.model.in_channels != expected:
            raise ConfigError(
                f"model in_channels {self.model.in_channels} does not match "
                f"{self.patch_encoding!r} encoding ({expected} channels)"
            )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in cls.__dataclass_fields__.values()}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown experiment config keys: {sorted(unknown)}")
        kwargs = dict(d)
        if "phantom" in kwargs:
            kwargs["phantom"] = PhantomConfig.from_dict(kwargs["phantom"])
        if "folds" in kwargs:
            kwargs["folds"] = FoldConfig(**kwargs["folds"])
        if "model" in kwargs:
            kwargs["model"] = ModelConfig.from_dict(kwargs["model"])
        if "train" in kwargs:
            kwargs["train"] = TrainConfig.from_dict(kwargs["train"])
        if "baseline" in kwargs:
            kwargs["baseline"] = BaselineConfig(**kwargs["baseline"])
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg


def load_config(path, seed_override: int | None = None) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON: {e}") from e
    if seed_override is not None:
        raw["seed"] = seed_override
    cfg = ExperimentConfig.from_dict(raw)
    # the phantom inherits the master seed unless its own was set explicitly
    if "phantom" not in raw or "seed" not in raw.get("phantom", {}):
        cfg = ExperimentConfig.from_dict(
            dict(cfg.to_dict(), phantom=dict(cfg.phantom.to_dict(), seed=cfg.seed))
        )
    elif seed_override is not None:
        cfg = ExperimentConfig.from_dict(
            dict(cfg.to_dict(), phantom=dict(cfg.phantom.to_dict(), seed=seed_override))
        )
    return cfg
