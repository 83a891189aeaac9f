"""Command-line entry point.

Exit codes: 0 ok, 2 configuration error, 3 data or I/O error, 4 artifact
mismatch (e.g. checkpoint classes differ from the dataset's).
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from collections import Counter
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint
from .config import STRATEGIES, load_config
from .dataset import ClassCatalog, resize_array, stratified_split, synthesize_dataset, write_directory_dataset
from .errors import ConfigurationError, DataError, HybridTuneError
from .explain import Caption, grad_cam, render_annotated
from .metrics import report_csv, report_text
from .nn import predict_proba
from .pipeline import (
    compare,
    compare_runs_csv,
    compare_summary_csv,
    compare_text,
    evaluate_images,
    execute,
    load_corpus,
    write_run,
)
from .ppm import read_ppm
from .routing import DEFAULT_THRESHOLD, route_waste

logger = logging.getLogger("hybridtune")


def _size(text: str) -> tuple[int, int]:
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HxW, got {text!r}") from None
    return h, w


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _str_list(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _load_image(path, net) -> np.ndarray:
    px = read_ppm(path)
    _, h, w = net.input_shape
    return resize_array(px, h, w) if px.shape[1:] != (h, w) else px


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    result = execute(cfg)
    paths = write_run(result, cfg)
    for kind, p in paths.items():
        print(f"{kind}={p}")
    if result.test_report is not None:
        print(f"test_accuracy={result.test_report.accuracy:.6f}")
    return 0


def cmd_eval(args) -> int:
    net = load_checkpoint(args.checkpoint)
    images, _ = load_corpus(args.data, ClassCatalog(tuple(net.class_labels)), net.input_shape[1:])
    if not images:
        raise DataError(f"no images under {args.data}")
    split = stratified_split(images, seed=args.split_seed)
    cm, report = evaluate_images(net, split.part(args.split))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    text = report_text(report, name=Path(args.checkpoint).stem)
    (out / "metrics.txt").write_text(text, encoding="utf-8")
    (out / "metrics.csv").write_text(report_csv(report), encoding="utf-8")
    (out / "confusion.csv").write_text(cm.to_csv(), encoding="utf-8")
    sys.stdout.write(text)
    return 0


def cmd_infer(args) -> int:
    if not 0.0 <= args.threshold <= 1.0:
        raise ConfigurationError("threshold must lie in [0, 1]")
    net = load_checkpoint(args.checkpoint)
    px = _load_image(args.image, net)
    probs = predict_proba(net, px[None])[0]
    print(route_waste(probs, net.class_labels, args.threshold).line())
    return 0


def cmd_explain(args) -> int:
    net = load_checkpoint(args.checkpoint)
    target = None
    if args.class_name is not None:
        if args.class_name not in net.class_labels:
            raise ConfigurationError(f"unknown class {args.class_name!r}; model classes: {', '.join(net.class_labels)}")
        target = net.class_labels.index(args.class_name)
    px = _load_image(args.image, net)
    cam = grad_cam(net, px, target)
    labels = net.class_labels
    parent = Path(args.image).resolve().parent.name
    actual = parent if parent in labels else "unknown"
    ref = labels.index(actual) if actual in labels else cam.target_class
    loss = -math.log(max(float(cam.probabilities[ref]), 1e-300))
    caption = Caption(labels[cam.target_class], actual, loss, cam.probability)
    out = Path(args.out) if args.out else Path(Path(args.image).stem + "_cam.ppm")
    ppm_path, txt_path = render_annotated(px, cam, caption, out)
    print(f"heatmap={ppm_path}")
    print(f"caption={txt_path}")
    sys.stdout.write(caption.text())
    return 0


def cmd_compare(args) -> int:
    cfg = load_config(args.config)
    rows, summary = compare(cfg, args.strategies, args.seeds)
    out = Path(args.out) if args.out else Path(cfg.output.dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        counts = Counter(r.strategy for r in rows)
        (out / "compare_runs.csv").write_text(compare_runs_csv(rows), encoding="utf-8")
        (out / "compare_summary.csv").write_text(compare_summary_csv(summary, counts), encoding="utf-8")
        (out / "compare.txt").write_text(compare_text(summary), encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot write comparison to {out}: {exc}") from exc
    sys.stdout.write(compare_text(summary))
    return 0


def cmd_synth_data(args) -> int:
    images, catalog = synthesize_dataset(args.task, args.n, args.res, args.seed)
    try:
        n = write_directory_dataset(args.out, images, catalog)
    except OSError as exc:
        raise DataError(f"cannot write corpus to {args.out}: {exc}") from exc
    print(f"wrote {n} images in {len(catalog)} classes to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hybridtune", description="Hybrid transfer-learning toolkit for waste classification.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a network as described by a JSON run config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="metrics and confusion matrix on one split of a corpus")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=["train", "validation", "test"])
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="classify one PPM image and route it to a bin")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("explain", help="gradient-weighted activation heatmap for one image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--class", dest="class_name", default=None)
    p.add_argument("--out", default=None, help="overlay PPM path (caption goes next to it as .txt)")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("compare", help="run several strategies over several seeds")
    p.add_argument("--config", required=True)
    p.add_argument("--strategies", type=_str_list, default=["hybrid", "feature-extraction", "scratch"],
                   help=f"comma-separated subset of {','.join(STRATEGIES)}")
    p.add_argument("--seeds", type=_int_list, default=[1, 2, 3, 4, 5])
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("synth-data", help="write a synthetic directory-per-class PPM corpus")
    p.add_argument("--task", required=True, choices=["source", "target"])
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--res", type=_size, default=(32, 32))
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth_data)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except HybridTuneError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
