"""Run configuration: a JSON tree validated fail-closed (unknown keys are errors)."""
from __future__ import annotations

import json
from pathlib import Path
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .augment import AugmentationPolicy
from .models import KINDS


class ConfigError(ValueError):
    """Invalid configuration; ``field`` is the dotted path of the offending key."""

    def __init__(self, message: str, field: str = ""):
        super().__init__(message)
        self.field = field


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GenerateSettings(Strict):
    background: Literal["concrete", "soil", "rock"] = "concrete"
    n_per_class: int = Field(200, ge=1)
    seed: int = 0
    noise_amplitude: float = Field(0.25, ge=0, le=1)
    crack_darkness: Optional[float] = Field(None, ge=0, le=1)
    crack_width_px: Optional[Tuple[float, float]] = None
    crack_walk_steps: int = Field(12, ge=1)


class DataSource(Strict):
    path: Optional[str] = None
    generate: Optional[GenerateSettings] = None

    @model_validator(mode="after")
    def _one_origin(self):
        if (self.path is None) == (self.generate is None):
            raise ValueError("exactly one of 'path' or 'generate' must be given")
        return self


class SplitSettings(Strict):
    train_fraction: float = Field(0.8, gt=0, lt=1)
    seed: int = 0


class DataSettings(Strict):
    side: int = Field(64, ge=8)
    source: Optional[DataSource] = Field(
        default_factory=lambda: DataSource(generate=GenerateSettings(background="concrete", n_per_class=5000)))
    target: Optional[DataSource] = Field(
        default_factory=lambda: DataSource(generate=GenerateSettings(background="soil", n_per_class=200)))
    split: SplitSettings = Field(default_factory=SplitSettings)


class ModelSettings(Strict):
    kinds: List[Literal[KINDS]] = Field(default_factory=lambda: ["lenet5"], min_length=1)  # type: ignore[valid-type]
    scale: Literal["full", "desk"] = "desk"


class TrainSettings(Strict):
    epochs: int = Field(10, ge=1)
    batch_size: int = Field(64, ge=1)
    learning_rate: float = Field(0.01, ge=0)
    momentum: float = Field(0.9, ge=0, lt=1)
    seed: int = 0
    timing: bool = True
    checkpoint_in: Optional[str] = None
    save_checkpoints: bool = True


class AugmentationSettings(Strict):
    enabled: bool = False
    flip: bool = True
    hflip_prob: float = 0.5
    vflip_prob: float = 0.5
    rotate: bool = True
    rotation_degrees: float = 15.0
    scale: bool = True
    scale_range: Tuple[float, float] = (0.8, 1.2)
    random_crop: bool = True
    crop_fraction: float = 0.9
    center_crop: bool = False
    center_crop_fraction: float = 0.9
    brightness: bool = True
    brightness_range: Tuple[float, float] = (0.8, 1.2)
    contrast: bool = True
    contrast_range: Tuple[float, float] = (0.8, 1.2)
    hue: bool = True
    hue_shift: float = 0.05
    rng_seed: int = 0

    def policy(self) -> Optional[AugmentationPolicy]:
        if not self.enabled:
            return None
        return AugmentationPolicy(**self.model_dump(exclude={"enabled"}))


class RunConfig(Strict):
    data: DataSettings = Field(default_factory=DataSettings)
    model: ModelSettings = Field(default_factory=ModelSettings)
    train: TrainSettings = Field(default_factory=TrainSettings)
    augmentation: AugmentationSettings = Field(default_factory=AugmentationSettings)
    mode: Literal["pretrain", "scratch", "transfer_merge", "transfer_finetune"] = "transfer_merge"
    output_dir: str = "results"
    run_id: Optional[str] = None

    @model_validator(mode="after")
    def _check(self):
        if self.augmentation.enabled:
            self.augmentation.policy()  # surfaces range errors at load time
        if self.mode == "transfer_finetune" and not self.train.checkpoint_in:
            raise ValueError("mode transfer_finetune needs train.checkpoint_in")
        return self

    def echo(self) -> dict:
        return self.model_dump(mode="json")


def _field_path(err: dict) -> str:
    return ".".join(str(p) for p in err["loc"])


def parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw: dict, overrides: List[str]) -> dict:
    """Apply ``a.b.c=value`` overrides; values parse as JSON, falling back to strings."""
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not of the form key=value", item)
        node = raw
        parts = key.split(".")
        for p in parts[:-1]:
            nxt = node.get(p)
            if nxt is None:
                nxt = node[p] = {}
            if not isinstance(nxt, dict):
                raise ConfigError(f"override {key!r}: {p!r} is not a section", key)
            node = nxt
        node[parts[-1]] = parse_value(value)
    return raw


def validate_config(raw: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        err = exc.errors()[0]
        path = _field_path(err)
        if err["type"] == "extra_forbidden":
            msg = f"unknown config key {path!r}"
        else:
            msg = f"{path or 'config'}: {err['msg']}"
        raise ConfigError(msg, path) from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: Optional[str], overrides: List[str] = ()) -> tuple[RunConfig, Path]:
    """Parse and validate; returns the config and the directory paths resolve against."""
    if path is None:
        raw, base = {}, Path.cwd()
    else:
        p = Path(path)
        try:
            raw = json.loads(p.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config document must be a JSON object")
        base = p.resolve().parent
    return validate_config(apply_overrides(raw, list(overrides))), base
