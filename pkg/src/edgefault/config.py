"""Configuration dataclasses and JSON loading.

Every documented default in the package is overridable from a JSON config
file with one section per stage, e.g.::

    {"model": {"n_experts": 8}, "train": {"epochs": 20}, "sim": {...}}

Unknown keys are rejected rather than silently ignored.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .errors import ConfigError, ValidationError
from .losses import LossWeights


@dataclass
class ModelConfig:
    n_features: int = 7
    d_model: int = 64
    attn_hidden: int = 32          # graph-encoder attention hidden width
    n_heads: int = 4
    class_feature_width: int = 8   # classification feature / prototype width
    n_classes: int = 4             # includes the no-fault class 0
    n_experts: int = 12
    g_max: int = 8


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_intervals: int = 1
    base_lr: float = 1e-3
    lr_decay_factor: float = 0.1
    lr_decay_every: int = 10
    weight_decay: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    proto_update_weight: float = 0.9    # EMA step toward correct predictions
    stage_window: int = 5               # epochs of val history for the switch
    stage_std_threshold: float = 0.02   # accuracy std that triggers the switch
    stage_switch_fraction: float = 0.5  # unconditional switch point
    train_fraction: float = 0.70
    val_fraction: float = 0.15
    seed: int = 0
    loss: LossWeights = field(default_factory=LossWeights)


@dataclass
class TuneConfig:
    epoch_threshold: int = 5   # expert add/remove boundary, in stream steps
    lr: float = 1e-4
    weight_decay: float = 0.01
    seed: int = 0
    metrics_window: int = 50   # sliding window for the tuning log accuracies


def _from_dict(cls, data: dict):
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(names)
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    try:
        kwargs = {}
        for key, value in data.items():
            if key == "loss" and isinstance(value, dict):
                value = _from_dict(LossWeights, value)
            kwargs[key] = value
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError, ValidationError) as exc:
        raise ConfigError(f"bad {cls.__name__}: {exc}") from exc


def load_config_file(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    return data


def model_config(data: dict | None = None) -> ModelConfig:
    return _from_dict(ModelConfig, (data or {}).get("model", {}))


def train_config(data: dict | None = None) -> TrainConfig:
    return _from_dict(TrainConfig, (data or {}).get("train", {}))


def tune_config(data: dict | None = None) -> TuneConfig:
    return _from_dict(TuneConfig, (data or {}).get("tune", {}))
