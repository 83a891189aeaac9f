"""SGD with momentum and the three transfer strategies.

* feature extraction: trunk frozen, only the head trains;
* full fine-tuning: every group trains at one learning rate from epoch 0;
* hybrid tuning: feature extraction until validation loss plateaus, then
  groups are unfrozen one at a time from the head downward, each at a
  learning rate ``head_lr / decay**(max_depth - depth)``.

Gradual unfreezing with smaller rates near the input is what protects the
source-task filters from being overwritten early (catastrophic forgetting).
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from . import tensor as T
from .augment import AugmentConfig, augment_batch
from .dataset import DatasetSplit, as_arrays
from .errors import ConfigurationError, DataError
from .nn import Network, forward, set_frozen

logger = logging.getLogger(__name__)

PRE_TRAINING = "pre-training"
FINE_TUNING = "fine-tuning"


@dataclass(frozen=True)
class OptimizerConfig:
    base_lr: float = 0.01
    momentum: float = 0.9
    batch_size: int = 32
    max_epochs: int = 100
    shuffle_seed: int = 0

    def __post_init__(self):
        if not self.base_lr >= 0:
            raise ConfigurationError("base_lr must be non-negative")
        if not 0 <= self.momentum < 1:
            raise ConfigurationError("momentum must lie in [0, 1)")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigurationError("batch_size and max_epochs must be >= 1")


@dataclass(frozen=True)
class PlateauRule:
    min_delta: float = 1e-3
    patience: int = 5
    max_epochs: int = 100

    def __post_init__(self):
        if self.patience < 1 or self.max_epochs < 1 or self.min_delta < 0:
            raise ConfigurationError("plateau rule needs patience >= 1, max_epochs >= 1, min_delta >= 0")


@dataclass(frozen=True)
class HybridSchedule:
    stage1: PlateauRule = PlateauRule()
    unfreeze_trigger: str = "plateau"  # or "fixed_epochs"
    unfreeze_plateau: PlateauRule = PlateauRule(max_epochs=100)
    epochs_per_stage: int = 10
    stage2_max_epochs: int = 100
    lr_decay: float = 2.0
    head_lr: float = 0.01

    def __post_init__(self):
        if not self.lr_decay > 1:
            raise ConfigurationError(f"lr_decay must be > 1, got {self.lr_decay}")
        if self.unfreeze_trigger not in ("plateau", "fixed_epochs"):
            raise ConfigurationError(f"unknown unfreeze trigger {self.unfreeze_trigger!r}")
        if self.epochs_per_stage < 1 or self.stage2_max_epochs < 1:
            raise ConfigurationError("epochs_per_stage and stage2_max_epochs must be >= 1")
        if not self.head_lr >= 0:
            raise ConfigurationError("head_lr must be non-negative")


@dataclass
class EpochRecord:
    epoch: int
    stage: str
    train_loss: float
    val_loss: float
    train_acc: float
    val_acc: float
    unfrozen: tuple[int, ...]
    lrs: dict[int, float]


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)
    max_depth: int = 0

    def __len__(self) -> int:
        return len(self.records)

    @property
    def val_losses(self) -> list[float]:
        return [r.val_loss for r in self.records]

    def extend(self, other: "TrainHistory") -> None:
        self.records.extend(other.records)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        depths = range(self.max_depth + 1)
        writer.writerow(
            ["epoch", "stage", "train_loss", "val_loss", "train_acc", "val_acc", "unfrozen", "unfrozen_count"]
            + [f"lr_{d}" for d in depths]
        )
        for r in self.records:
            writer.writerow(
                [r.epoch, r.stage, repr(r.train_loss), repr(r.val_loss), repr(r.train_acc), repr(r.val_acc),
                 ";".join(str(d) for d in sorted(r.unfrozen, reverse=True)), len(r.unfrozen)]
                + [repr(r.lrs[d]) if d in r.lrs else "" for d in depths]
            )
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "TrainHistory":
        rows = list(csv.DictReader(io.StringIO(text)))
        lr_cols = []
        if rows:
            lr_cols = sorted((k for k in rows[0] if k.startswith("lr_")), key=lambda k: int(k[3:]))
        hist = cls(max_depth=len(lr_cols) - 1 if lr_cols else 0)
        for row in rows:
            unfrozen = tuple(sorted(int(v) for v in row["unfrozen"].split(";") if v))
            lrs = {int(k[3:]): float(row[k]) for k in lr_cols if row[k] != ""}
            hist.records.append(
                EpochRecord(int(row["epoch"]), row["stage"], float(row["train_loss"]), float(row["val_loss"]),
                            float(row["train_acc"]), float(row["val_acc"]), unfrozen, lrs)
            )
        return hist


# ------------------------------------------------------------ optimizer bits


MomentumState = dict  # (depth, param index) -> velocity array


def sgd_step(
    net: Network,
    gradients: Mapping[int, Sequence[np.ndarray]],
    per_group_lrs: Mapping[int, float],
    momentum_state: MomentumState,
    momentum: float = 0.9,
) -> None:
    """v <- momentum * v - lr_g * grad; param <- param + v, for unfrozen groups only."""
    for g in net.groups:
        if g.frozen:
            continue
        if g.depth_index not in per_group_lrs:
            raise ConfigurationError(f"no learning rate for unfrozen group {g.depth_index}")
        lr = per_group_lrs[g.depth_index]
        grads = gradients.get(g.depth_index)
        if grads is None:
            continue
        for i, (p, grad) in enumerate(zip(g.parameters, grads)):
            if grad is None:
                continue
            key = (g.depth_index, i)
            v = momentum_state.get(key)
            dt = p.data.dtype
            if v is None:
                v = np.zeros_like(p.data)
            v = dt.type(momentum) * v - dt.type(lr) * grad.astype(dt, copy=False)
            momentum_state[key] = v
            p.data += v


def collect_gradients(net: Network) -> dict[int, list[Optional[np.ndarray]]]:
    return {g.depth_index: [p.grad for p in g.parameters] for g in net.groups if not g.frozen}


def discriminative_lrs(head_lr: float, decay: float, depths: Sequence[int], max_depth: int) -> dict[int, float]:
    """lr(d) = head_lr / decay**(max_depth - d)."""
    if not decay > 1:
        raise ConfigurationError(f"decay factor must be > 1, got {decay}")
    return {d: head_lr / decay ** (max_depth - d) for d in sorted(depths)}


def plateau_detect(losses: Sequence[float], min_delta: float, patience: int) -> bool:
    """True once ``patience`` consecutive trailing epochs fail to beat the best loss by ``min_delta``."""
    if not losses:
        return False
    best = losses[0]
    stale = 0
    for loss in losses[1:]:
        if best - loss >= min_delta:
            best = loss
            stale = 0
        else:
            stale += 1
    return stale >= patience


# --------------------------------------------------------------- epoch loop


@dataclass
class _Data:
    x_train: np.ndarray
    y_train: np.ndarray
    x_val: np.ndarray
    y_val: np.ndarray

    @classmethod
    def from_split(cls, split: DatasetSplit, dtype) -> "_Data":
        if not split.train:
            raise DataError("training split is empty")
        xt, yt = as_arrays(split.train)
        xv, yv = as_arrays(split.validation)
        return cls(xt.astype(dtype), yt, xv.astype(dtype), yv)


def evaluate(net: Network, x: np.ndarray, y: np.ndarray, batch_size: int = 256) -> tuple[float, float]:
    """Mean cross-entropy and accuracy; (nan, nan) for an empty set."""
    if len(x) == 0:
        return math.nan, math.nan
    total_loss = 0.0
    correct = 0
    with T.no_grad():
        for i in range(0, len(x), batch_size):
            logits = forward(net, x[i : i + batch_size])
            loss, probs = T.softmax_cross_entropy(logits, y[i : i + batch_size])
            total_loss += float(loss.data) * len(probs)
            correct += int((probs.argmax(axis=1) == y[i : i + batch_size]).sum())
    return total_loss / len(x), correct / len(x)


class _Loop:
    """Runs epochs against one network, threading momentum state and epoch count."""

    def __init__(self, net: Network, data: _Data, opt: OptimizerConfig, augment: Optional[AugmentConfig], history: TrainHistory):
        self.net = net
        self.data = data
        self.opt = opt
        self.augment = augment
        self.history = history
        self.momentum_state: MomentumState = {}

    @property
    def epoch(self) -> int:
        return len(self.history.records)

    def run_epoch(self, stage: str, lrs: Mapping[int, float]) -> EpochRecord:
        net, d, opt = self.net, self.data, self.opt
        net.sync_grad_flags()
        epoch = self.epoch + 1
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([opt.shuffle_seed, epoch])))
        order = rng.permutation(len(d.x_train))
        seen = 0
        loss_sum = 0.0
        correct = 0
        for start in range(0, len(order), opt.batch_size):
            idx = order[start : start + opt.batch_size]
            xb = d.x_train[idx]
            if self.augment is not None:
                xb = augment_batch(xb, idx, self.augment, epoch)
            yb = d.y_train[idx]
            logits = forward(net, xb)
            loss, probs = T.softmax_cross_entropy(logits, yb)
            if loss.requires_grad:
                T.backward(loss)
                sgd_step(net, collect_gradients(net), lrs, self.momentum_state, opt.momentum)
            loss_sum += float(loss.data) * len(idx)
            correct += int((probs.argmax(axis=1) == yb).sum())
            seen += len(idx)
        val_loss, val_acc = evaluate(net, d.x_val, d.y_val)
        rec = EpochRecord(epoch, stage, loss_sum / seen, val_loss, correct / seen, val_acc,
                          net.unfrozen_depths(), dict(lrs))
        self.history.records.append(rec)
        logger.debug("epoch %d %s train_loss=%.4f val_loss=%.4f val_acc=%.3f", epoch, stage, rec.train_loss, val_loss, val_acc)
        return rec

    def monitor(self, since: int) -> list[float]:
        """Losses that drive plateau detection: validation, or training when no validation set exists."""
        recs = self.history.records[since:]
        if len(self.data.x_val):
            return [r.val_loss for r in recs]
        return [r.train_loss for r in recs]

    def run_until(self, stage: str, lrs: Mapping[int, float], stop: Optional[PlateauRule], max_epochs: int) -> None:
        start = self.epoch
        for _ in range(max_epochs):
            self.run_epoch(stage, lrs)
            if stop is not None and plateau_detect(self.monitor(start), stop.min_delta, stop.patience):
                break


def _check_groups(net: Network) -> None:
    if len(net.groups) < 2:
        raise ConfigurationError("network needs at least two groups for transfer strategies")


def train_feature_extraction(
    net: Network,
    split: DatasetSplit,
    opt: OptimizerConfig,
    augment: Optional[AugmentConfig],
    stop: PlateauRule = PlateauRule(),
    head_lr: Optional[float] = None,
    _loop: Optional[_Loop] = None,
) -> TrainHistory:
    """Freeze every group below the head and train the head alone."""
    _check_groups(net)
    loop = _loop or _Loop(net, _Data.from_split(split, net.dtype), opt, augment, TrainHistory(max_depth=net.max_depth))
    set_frozen(net, range(net.max_depth), True)
    set_frozen(net, [net.max_depth], False)
    lr = opt.base_lr if head_lr is None else head_lr
    loop.run_until(PRE_TRAINING, {net.max_depth: lr}, stop, stop.max_epochs)
    return loop.history


def train_full_finetune(
    net: Network,
    split: DatasetSplit,
    opt: OptimizerConfig,
    augment: Optional[AugmentConfig],
    stop: Optional[PlateauRule] = None,
) -> TrainHistory:
    """All groups trainable from the first epoch at ``opt.base_lr``."""
    _check_groups(net)
    loop = _Loop(net, _Data.from_split(split, net.dtype), opt, augment, TrainHistory(max_depth=net.max_depth))
    set_frozen(net, range(net.max_depth + 1), False)
    lrs = {g.depth_index: opt.base_lr for g in net.groups}
    loop.run_until(FINE_TUNING, lrs, stop, opt.max_epochs)
    return loop.history


def hybrid_tune(
    net: Network,
    split: DatasetSplit,
    opt: OptimizerConfig,
    schedule: HybridSchedule,
    augment: Optional[AugmentConfig],
) -> tuple[Network, TrainHistory]:
    """Two-stage hybrid tuning of a source-trained network whose head fits the target catalog.

    Stage 1 trains the head alone until ``schedule.stage1`` fires. Stage 2
    unfreezes the next lower group each time the unfreeze trigger fires,
    recomputing discriminative rates over the unfrozen set, and stops when
    the trigger fires with every group unfrozen or after
    ``schedule.stage2_max_epochs`` epochs.
    """
    if not isinstance(schedule, HybridSchedule):
        raise ConfigurationError("hybrid_tune needs a HybridSchedule")
    _check_groups(net)
    loop = _Loop(net, _Data.from_split(split, net.dtype), opt, augment, TrainHistory(max_depth=net.max_depth))
    train_feature_extraction(net, split, opt, augment, schedule.stage1, schedule.head_lr, _loop=loop)

    stage2_start = loop.epoch
    remaining = schedule.stage2_max_epochs
    next_depth = net.max_depth - 1
    while remaining > 0:
        set_frozen(net, [next_depth], False)
        lrs = discriminative_lrs(schedule.head_lr, schedule.lr_decay, net.unfrozen_depths(), net.max_depth)
        phase_start = loop.epoch
        fired = False
        while remaining > 0 and not fired:
            loop.run_epoch(FINE_TUNING, lrs)
            remaining -= 1
            if schedule.unfreeze_trigger == "fixed_epochs":
                fired = loop.epoch - phase_start >= schedule.epochs_per_stage
            else:
                rule = schedule.unfreeze_plateau
                fired = plateau_detect(loop.monitor(phase_start), rule.min_delta, rule.patience) or (
                    loop.epoch - phase_start >= rule.max_epochs
                )
        if next_depth == 0 and fired:
            break
        if fired:
            next_depth -= 1
    logger.info("hybrid tuning: %d stage-1 epochs, %d stage-2 epochs", stage2_start, loop.epoch - stage2_start)
    return net, loop.history

