"""End-to-end runs assembled from a :class:`RunConfig`: data preparation,
source pretraining, strategy dispatch, evaluation and strategy comparison."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import STRATEGIES, RunConfig
from .dataset import (
    ClassCatalog,
    DatasetSplit,
    LabeledImage,
    as_arrays,
    load_directory_dataset,
    manifest_text,
    read_catalog,
    resize_bilinear,
    stratified_split,
    synthesize_dataset,
)
from .errors import ArtifactMismatchError, ConfigurationError, DataError
from .metrics import ConfusionMatrix, MetricsReport, compute_metrics, confusion_matrix, report_table
from .nn import Network, build_network, predict_proba, replace_head
from .trainer import (
    TrainHistory,
    hybrid_tune,
    train_feature_extraction,
    train_full_finetune,
)

logger = logging.getLogger(__name__)

NEEDS_SOURCE = ("feature-extraction", "full-finetune", "hybrid")


def resize_all(images: Sequence[LabeledImage], size: tuple[int, int]) -> list[LabeledImage]:
    return [im if im.pixels.shape[1:] == tuple(size) else resize_bilinear(im, size) for im in images]


def load_corpus(path, catalog: Optional[ClassCatalog] = None, size: Optional[tuple[int, int]] = None) -> tuple[list[LabeledImage], ClassCatalog]:
    """Load a directory corpus, optionally in a given catalog order and resized."""
    on_disk = read_catalog(path)
    if catalog is None:
        catalog = on_disk
    elif set(on_disk.names) != set(catalog.names):
        raise ArtifactMismatchError(f"dataset classes {on_disk.names} do not match model classes {catalog.names}")
    images = load_directory_dataset(path, catalog)
    if size is not None:
        images = resize_all(images, size)
    return images, catalog


def prepare_target(cfg: RunConfig) -> tuple[DatasetSplit, ClassCatalog]:
    ds = cfg.dataset
    size = ds.size()
    if ds.path is None:
        images, catalog = synthesize_dataset("target", ds.n_per_class, size, ds.synth_seed)
    else:
        images, catalog = load_corpus(ds.path, size=size)
    if not images:
        raise DataError("dataset contains no images")
    split = stratified_split(images, seed=ds.split_seed)
    split.catalog = catalog
    return split, catalog


def pretrain_source(cfg: RunConfig, input_shape: tuple[int, int, int]) -> Network:
    """Source-task network: loaded from ``source.checkpoint`` or trained on the synthetic source task."""
    src = cfg.source
    if src is None:
        raise ConfigurationError(f"strategy {cfg.trainer.strategy!r} needs a source section")
    if src.checkpoint is not None:
        try:
            net = load_checkpoint(src.checkpoint)
        except FileNotFoundError as exc:
            raise DataError(f"source checkpoint not found: {src.checkpoint}") from exc
        if tuple(net.input_shape) != tuple(input_shape):
            raise ArtifactMismatchError(f"source checkpoint input {net.input_shape} != target input {input_shape}")
        return net
    images, catalog = synthesize_dataset("source", src.n_per_class, input_shape[1:], src.synth_seed)
    split = stratified_split(images, seed=src.synth_seed)
    net = build_network(cfg.model.architecture, input_shape, catalog.names, cfg.model.init_seed)
    opt = cfg.trainer.optimizer.model_copy(update={"max_epochs": src.max_epochs}).build()
    train_full_finetune(net, split, opt, cfg.augment.build(), cfg.trainer.baseline_stop.rule())
    return net


def run_strategy(cfg: RunConfig, split: DatasetSplit, catalog: ClassCatalog, source: Optional[Network] = None) -> tuple[Network, TrainHistory]:
    strategy = cfg.trainer.strategy
    if strategy not in STRATEGIES:
        raise ConfigurationError(f"unknown strategy {strategy!r}")
    input_shape = (3, *cfg.dataset.size())
    opt = cfg.trainer.optimizer.build()
    schedule = cfg.trainer.schedule.build()
    augment = cfg.augment.build()
    if strategy == "scratch":
        net = build_network(cfg.model.architecture, input_shape, catalog.names, cfg.model.init_seed)
        return net, train_full_finetune(net, split, opt, augment, cfg.trainer.baseline_stop.rule())
    if source is None:
        source = pretrain_source(cfg, input_shape)
    net = replace_head(source, catalog.names, cfg.model.init_seed)
    if strategy == "feature-extraction":
        return net, train_feature_extraction(net, split, opt, augment, schedule.stage1, schedule.head_lr)
    if strategy == "full-finetune":
        return net, train_full_finetune(net, split, opt, augment, cfg.trainer.baseline_stop.rule())
    return hybrid_tune(net, split, opt, schedule, augment)


def evaluate_images(net: Network, images: Sequence[LabeledImage]) -> tuple[ConfusionMatrix, MetricsReport]:
    if not images:
        raise DataError("selected split is empty")
    x, y = as_arrays(images)
    pred = predict_proba(net, x).argmax(axis=1)
    cm = confusion_matrix(y, pred, net.class_labels)
    return cm, compute_metrics(cm)


@dataclass
class RunResult:
    net: Network
    history: TrainHistory
    split: DatasetSplit
    catalog: ClassCatalog
    test_report: MetricsReport


def execute(cfg: RunConfig, source: Optional[Network] = None) -> RunResult:
    split, catalog = prepare_target(cfg)
    net, history = run_strategy(cfg, split, catalog, source)
    net.history_blob = history.to_csv().encode("utf-8")
    report = evaluate_images(net, split.test)[1] if split.test else None
    return RunResult(net, history, split, catalog, report)


def write_run(result: RunResult, cfg: RunConfig) -> dict[str, Path]:
    out = Path(cfg.output.dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "checkpoint": out / cfg.output.checkpoint,
            "history": out / cfg.output.history,
            "manifest": out / cfg.output.manifest,
        }
        save_checkpoint(result.net, paths["checkpoint"])
        paths["history"].write_text(result.history.to_csv(), encoding="utf-8")
        paths["manifest"].write_text(manifest_text(result.split, result.catalog), encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot write run artifacts to {out}: {exc}") from exc
    return paths


# ---------------------------------------------------------------- compare


@dataclass
class CompareRow:
    strategy: str
    seed: int
    accuracy: float
    precision: float
    recall: float
    f1: float
    epochs: int


def compare(cfg: RunConfig, strategies: Sequence[str], seeds: Sequence[int]) -> tuple[list[CompareRow], list[tuple[str, dict[str, float]]]]:
    """Run every (strategy, seed) pair; returns per-run rows and per-strategy means sorted by accuracy."""
    strategies = list(dict.fromkeys(strategies))
    if len(strategies) < 2:
        raise ConfigurationError("compare needs at least two distinct strategies")
    for s in strategies:
        if s not in STRATEGIES:
            raise ConfigurationError(f"unknown strategy {s!r}; choose from {', '.join(STRATEGIES)}")
    if not seeds:
        raise ConfigurationError("compare needs at least one seed")
    rows: list[CompareRow] = []
    for seed in seeds:
        seeded = cfg.reseeded(seed)
        source = None
        if any(s in NEEDS_SOURCE for s in strategies):
            source = pretrain_source(seeded, (3, *seeded.dataset.size()))
        for strategy in strategies:
            res = execute(seeded.with_strategy(strategy), source)
            if res.test_report is None:
                raise DataError("test split is empty")
            h = res.test_report.headline("weighted")
            rows.append(CompareRow(strategy, seed, h["Accuracy"], h["Precision"], h["Recall"], h["F1 Score"], len(res.history)))
            logger.info("%s seed %d: accuracy %.4f", strategy, seed, h["Accuracy"])
    rows.sort(key=lambda r: (r.strategy, r.seed))
    summary = []
    for s in strategies:
        mine = [r for r in rows if r.strategy == s]
        summary.append((s, {
            "Accuracy": float(np.mean([r.accuracy for r in mine])),
            "Precision": float(np.mean([r.precision for r in mine])),
            "Recall": float(np.mean([r.recall for r in mine])),
            "F1 Score": float(np.mean([r.f1 for r in mine])),
        }))
    summary.sort(key=lambda item: (-item[1]["Accuracy"], item[0]))
    return rows, summary


def compare_runs_csv(rows: Sequence[CompareRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["strategy", "seed", "accuracy", "precision", "recall", "f1", "epochs"])
    for r in rows:
        w.writerow([r.strategy, r.seed, repr(r.accuracy), repr(r.precision), repr(r.recall), repr(r.f1), r.epochs])
    return buf.getvalue()


def compare_summary_csv(summary, n_runs: dict[str, int]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["strategy", "runs", "accuracy", "precision", "recall", "f1"])
    for name, vals in summary:
        w.writerow([name, n_runs[name], repr(vals["Accuracy"]), repr(vals["Precision"]), repr(vals["Recall"]), repr(vals["F1 Score"])])
    return buf.getvalue()


def compare_text(summary) -> str:
    return report_table(summary, name_header="Strategy")
