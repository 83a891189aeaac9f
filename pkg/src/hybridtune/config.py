"""JSON run configuration. Unknown keys are rejected at every level."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .augment import AugmentConfig
from .errors import ConfigurationError
from .trainer import HybridSchedule, OptimizerConfig, PlateauRule

STRATEGIES = ("feature-extraction", "full-finetune", "hybrid", "scratch")
Strategy = Literal["feature-extraction", "full-finetune", "hybrid", "scratch"]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class DatasetSection(_Strict):
    path: Optional[str] = None  # directory-per-class corpus; None synthesizes the target task
    n_per_class: int = Field(100, ge=1)
    resolution: Optional[tuple[int, int]] = None  # (H, W)
    synth_seed: int = 0
    split_seed: int = 0

    def size(self) -> tuple[int, int]:
        if self.resolution is not None:
            return self.resolution
        return (32, 32) if self.path is None else (48, 64)

    @field_validator("resolution")
    @classmethod
    def _positive(cls, v):
        if v is not None and min(v) < 1:
            raise ValueError("resolution must be positive")
        return v


class SourceSection(_Strict):
    checkpoint: Optional[str] = None  # pretrained source network; None pretrains on the synthetic source task
    n_per_class: int = Field(200, ge=1)
    synth_seed: int = 0
    max_epochs: int = Field(30, ge=1)


class ModelSection(_Strict):
    architecture: Literal["cnn-small", "cnn-medium"] = "cnn-small"
    init_seed: int = 42


class PlateauSection(_Strict):
    min_delta: float = Field(1e-3, ge=0)
    patience: int = Field(5, ge=1)
    max_epochs: int = Field(100, ge=1)

    def rule(self) -> PlateauRule:
        return PlateauRule(self.min_delta, self.patience, self.max_epochs)


class OptimizerSection(_Strict):
    kind: Literal["sgd-momentum"] = "sgd-momentum"
    base_lr: float = Field(0.01, ge=0)
    momentum: float = Field(0.9, ge=0, lt=1)
    batch_size: int = Field(32, ge=1)
    max_epochs: int = Field(100, ge=1)
    shuffle_seed: int = 0

    def build(self) -> OptimizerConfig:
        return OptimizerConfig(self.base_lr, self.momentum, self.batch_size, self.max_epochs, self.shuffle_seed)


class ScheduleSection(_Strict):
    stage1: PlateauSection = PlateauSection()
    unfreeze_trigger: Literal["plateau", "fixed_epochs"] = "plateau"
    unfreeze_plateau: PlateauSection = PlateauSection()
    epochs_per_stage: int = Field(10, ge=1)
    stage2_max_epochs: int = Field(100, ge=1)
    lr_decay: float = Field(2.0, gt=1)
    head_lr: float = Field(0.01, ge=0)

    def build(self) -> HybridSchedule:
        return HybridSchedule(
            self.stage1.rule(), self.unfreeze_trigger, self.unfreeze_plateau.rule(),
            self.epochs_per_stage, self.stage2_max_epochs, self.lr_decay, self.head_lr,
        )


class TrainerSection(_Strict):
    strategy: Strategy = "hybrid"
    optimizer: OptimizerSection = OptimizerSection()
    schedule: ScheduleSection = ScheduleSection()
    # early stopping for full-finetune and scratch runs
    baseline_stop: PlateauSection = PlateauSection()


class AugmentSection(_Strict):
    enabled: bool = True
    rotation_max_deg: float = Field(15.0, ge=0)
    zoom_range: tuple[float, float] = (0.9, 1.1)
    translate_max_frac: float = Field(0.1, ge=0)
    hflip_prob: float = Field(0.5, ge=0, le=1)
    fill: Literal["nearest"] = "nearest"
    seed: int = 0

    def build(self) -> Optional[AugmentConfig]:
        if not self.enabled:
            return None
        return AugmentConfig(self.rotation_max_deg, tuple(self.zoom_range), self.translate_max_frac,
                             self.hflip_prob, self.fill, self.seed)


class RoutingSection(_Strict):
    threshold: float = Field(0.9, ge=0, le=1)


class OutputSection(_Strict):
    dir: str = "run"
    checkpoint: str = "model.wnet"
    history: str = "history.csv"
    manifest: str = "manifest.txt"


class RunConfig(_Strict):
    dataset: DatasetSection = DatasetSection()
    source: Optional[SourceSection] = SourceSection()
    model: ModelSection = ModelSection()
    trainer: TrainerSection = TrainerSection()
    augment: AugmentSection = AugmentSection()
    routing: RoutingSection = RoutingSection()
    output: OutputSection = OutputSection()

    def reseeded(self, seed: int) -> "RunConfig":
        """Copy with every seed field set to ``seed``."""
        data = self.model_dump()
        data["dataset"]["synth_seed"] = seed
        data["dataset"]["split_seed"] = seed
        if data["source"] is not None:
            data["source"]["synth_seed"] = seed
        data["model"]["init_seed"] = seed
        data["trainer"]["optimizer"]["shuffle_seed"] = seed
        data["augment"]["seed"] = seed
        return RunConfig.model_validate(data)

    def with_strategy(self, strategy: str) -> "RunConfig":
        data = self.model_dump()
        data["trainer"]["strategy"] = strategy
        return RunConfig.model_validate(data)


def _format_errors(exc: ValidationError) -> str:
    return "; ".join(f"{'.'.join(str(p) for p in e['loc']) or '<root>'}: {e['msg']}" for e in exc.errors())


def parse_config(data) -> RunConfig:
    try:
        cfg = RunConfig.model_validate(data)
        cfg.augment.build()
    except ValidationError as exc:
        raise ConfigurationError(f"invalid config: {_format_errors(exc)}") from None
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror or exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from None
    return parse_config(data)
