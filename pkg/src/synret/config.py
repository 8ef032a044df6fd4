"""Run and training configuration with JSON overrides."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import UsageError


@dataclass
class RunConfig:
    d: int = 512
    lambda_frame: int = 2
    lambda_patch: int = 4
    tau: float = 4.0
    tau_dsl: float = 100.0
    literal_patch_norm: bool = False  # reproduce the fixed 1/lambda_patch frame average
    empty_layer_policy: str = "zero"
    seed: int = 0
    max_frames: int = 12
    heads: int = 8
    threads: int = 1

    def validate(self) -> None:
        if self.d < 1 or self.max_frames < 1:
            raise UsageError("d and max_frames must be positive")
        if self.lambda_frame < 1 or self.lambda_patch < 1:
            raise UsageError("lambda_frame and lambda_patch must be >= 1")
        if self.d % self.heads != 0:
            raise UsageError(f"d={self.d} must be divisible by heads={self.heads}")
        if self.empty_layer_policy != "zero":
            raise UsageError(f"unknown empty_layer_policy {self.empty_layer_policy!r}")
        if self.threads < 1:
            raise UsageError("threads must be >= 1")


@dataclass
class TrainConfig:
    batch_size: int = 4
    steps: int = 200
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    stop_loss: float | None = None  # stop early once a step's loss drops below

    def validate(self) -> None:
        if self.batch_size < 2:
            raise UsageError("batch_size must be >= 2 (contrastive loss needs negatives)")
        if self.steps < 0 or self.lr < 0:
            raise UsageError("steps and lr must be non-negative")


def config_from_dict(data: dict) -> tuple[RunConfig, TrainConfig]:
    run_fields = {f.name for f in dataclasses.fields(RunConfig)}
    train_fields = {f.name for f in dataclasses.fields(TrainConfig)}
    run_kwargs, train_kwargs = {}, {}
    for key, value in data.items():
        if key in run_fields:
            run_kwargs[key] = value
        elif key in train_fields:
            train_kwargs[key] = value
        else:
            raise UsageError(f"unknown config key {key!r}")
    run = RunConfig(**run_kwargs)
    train = TrainConfig(**train_kwargs)
    run.validate()
    train.validate()
    return run, train


def load_config(path) -> tuple[RunConfig, TrainConfig]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"cannot read config {path}: {e}") from None
    if not isinstance(data, dict):
        raise UsageError(f"{path}: config must be a JSON object")
    return config_from_dict(data)


def dump_config(run: RunConfig, train: TrainConfig) -> str:
    merged = {**dataclasses.asdict(run), **dataclasses.asdict(train)}
    return json.dumps(merged, indent=2, sort_keys=True) + "\n"
