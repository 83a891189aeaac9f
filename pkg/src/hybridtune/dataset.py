"""Labeled image corpora: directory ingestion, synthetic transfer tasks,
bilinear resizing and the stratified train/validation/test split."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, DataError, DatasetFormatError
from .ppm import read_ppm, write_ppm

logger = logging.getLogger(__name__)

WASTE_CATALOG = ("cardboard", "glass", "metal", "paper", "plastic", "other")
SOURCE_CATALOG = ("horizontal-stripes", "vertical-stripes", "checkerboard", "circle", "triangle", "noise")
TARGET_CATALOG = ("diagonal-stripes", "rings", "crosses", "gradient", "speckle", "empty")
CATALOG_FILE = "catalog.txt"
PPM_SUFFIXES = {".ppm", ".pnm"}


@dataclass(frozen=True)
class ClassCatalog:
    names: tuple[str, ...]

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        if not names or any(not n for n in names):
            raise ConfigurationError("catalog names must be non-empty")
        if len(set(names)) != len(names):
            raise ConfigurationError(f"duplicate catalog names in {names}")

    def __len__(self) -> int:
        return len(self.names)

    def __iter__(self):
        return iter(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)


@dataclass(frozen=True)
class LabeledImage:
    pixels: np.ndarray  # (3, H, W) float32 in [0, 1]
    label: int
    source_id: str


@dataclass
class DatasetSplit:
    train: list[LabeledImage]
    validation: list[LabeledImage]
    test: list[LabeledImage]
    split_seed: int
    catalog: ClassCatalog | None = field(default=None)

    def part(self, name: str) -> list[LabeledImage]:
        key = {"train": "train", "validation": "validation", "val": "validation", "test": "test"}.get(name)
        if key is None:
            raise ConfigurationError(f"unknown split {name!r}; use train, validation or test")
        return getattr(self, key)


def as_arrays(images: Sequence[LabeledImage]) -> tuple[np.ndarray, np.ndarray]:
    if not images:
        return np.zeros((0, 3, 1, 1), dtype=np.float32), np.zeros(0, dtype=np.int64)
    x = np.stack([im.pixels for im in images]).astype(np.float32, copy=False)
    y = np.array([im.label for im in images], dtype=np.int64)
    return x, y


# ------------------------------------------------------------------ loading


def read_catalog(root) -> ClassCatalog:
    """Catalog of a corpus: ``catalog.txt`` if present, else sorted subdirectory names."""
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"dataset directory not found: {root}")
    cat_file = root / CATALOG_FILE
    if cat_file.is_file():
        names = [ln.strip() for ln in cat_file.read_text(encoding="utf-8").splitlines() if ln.strip()]
    else:
        names = sorted(p.name for p in root.iterdir() if p.is_dir())
    if not names:
        raise DataError(f"no class directories under {root}")
    return ClassCatalog(tuple(names))


def load_directory_dataset(root, catalog: ClassCatalog | Sequence[str]) -> list[LabeledImage]:
    """Load ``root/<label>/*.ppm`` for every label in ``catalog``.

    Files are visited in lexicographic order per class, classes in catalog
    order. Unknown subdirectories are skipped with a warning; malformed files
    are collected and reported together.
    """
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"dataset directory not found: {root}")
    names = tuple(catalog)
    for sub in sorted(p.name for p in root.iterdir() if p.is_dir()):
        if sub not in names:
            logger.warning("skipping directory %s: not in catalog", root / sub)
    images: list[LabeledImage] = []
    bad: list[DatasetFormatError] = []
    for label, name in enumerate(names):
        cls_dir = root / name
        if not cls_dir.is_dir():
            continue
        for f in sorted(p for p in cls_dir.iterdir() if p.is_file() and p.suffix.lower() in PPM_SUFFIXES):
            try:
                px = read_ppm(f)
            except DatasetFormatError as exc:
                bad.append(exc)
                continue
            images.append(LabeledImage(px, label, f"{name}/{f.name}"))
    if bad:
        raise DatasetFormatError(", ".join(str(e.path) for e in bad), "; ".join(e.reason for e in bad))
    return images


def write_directory_dataset(root, images: Iterable[LabeledImage], catalog: ClassCatalog) -> int:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    (root / CATALOG_FILE).write_text("\n".join(catalog.names) + "\n", encoding="utf-8")
    for name in catalog:
        (root / name).mkdir(exist_ok=True)
    count = 0
    for im in images:
        stem = im.source_id.rsplit("/", 1)[-1]
        write_ppm(root / catalog.names[im.label] / f"{stem}.ppm", im.pixels)
        count += 1
    return count


# ----------------------------------------------------------------- resizing


def resize_array(pixels: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resize of (C, H, W) with corner-aligned sampling."""
    if height < 1 or width < 1:
        raise ConfigurationError(f"target size must be positive, got {height}x{width}")
    c, h, w = pixels.shape
    if (h, w) == (height, width):
        return pixels.copy()

    def coords(n_out, n_in):
        if n_out == 1:
            return np.full(1, (n_in - 1) / 2.0)
        return np.arange(n_out) * ((n_in - 1) / (n_out - 1))

    ys, xs = coords(height, h), coords(width, w)
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    p = pixels.astype(np.float64)
    top = p[:, y0][:, :, x0] * (1 - fx) + p[:, y0][:, :, x1] * fx
    bot = p[:, y1][:, :, x0] * (1 - fx) + p[:, y1][:, :, x1] * fx
    out = top * (1 - fy) + bot * fy
    return np.clip(out, 0.0, 1.0).astype(pixels.dtype)


def resize_bilinear(image: LabeledImage, size: tuple[int, int]) -> LabeledImage:
    return replace(image, pixels=resize_array(image.pixels, *size))


# -------------------------------------------------------------------- split


def _exact(r: float) -> Fraction:
    return Fraction(repr(float(r)))


def split_sizes(n: int, ratios=(0.50, 0.25, 0.25)) -> tuple[int, int, int]:
    """Floor/floor/remainder per-class sizes."""
    r = [_exact(v) for v in ratios]
    train = math.floor(r[0] * n)
    val = math.floor(r[1] * n)
    return train, val, n - train - val


def stratified_split(images: Sequence[LabeledImage], ratios=(0.50, 0.25, 0.25), seed: int = 0) -> DatasetSplit:
    if not images:
        raise ConfigurationError("cannot split an empty dataset")
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigurationError(f"split ratios must be three non-negative values summing to 1, got {ratios}")
    by_class: dict[int, list[int]] = {}
    for i, im in enumerate(images):
        by_class.setdefault(im.label, []).append(i)
    parts: list[list[int]] = [[], [], []]
    for label in sorted(by_class):
        idx = np.array(by_class[label])
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, label])))
        idx = idx[rng.permutation(len(idx))]
        a, b, _ = split_sizes(len(idx), ratios)
        parts[0].extend(idx[:a].tolist())
        parts[1].extend(idx[a : a + b].tolist())
        parts[2].extend(idx[a + b :].tolist())
    tr, va, te = ([images[i] for i in sorted(p)] for p in parts)
    return DatasetSplit(tr, va, te, seed)


def manifest_text(split: DatasetSplit, catalog: ClassCatalog) -> str:
    """Key-value report of per-class counts in each split part."""
    lines = [f"catalog={','.join(catalog.names)}", f"split_seed={split.split_seed}"]
    grand = 0
    for part in ("train", "validation", "test"):
        items = getattr(split, part)
        counts = np.bincount([im.label for im in items], minlength=len(catalog)) if items else np.zeros(len(catalog), int)
        for name, c in zip(catalog.names, counts):
            lines.append(f"{part}.{name}={int(c)}")
        lines.append(f"{part}.total={len(items)}")
        grand += len(items)
    lines.append(f"total={grand}")
    return "\n".join(lines) + "\n"


def parse_manifest(text: str) -> dict[str, str]:
    return dict(ln.split("=", 1) for ln in text.splitlines() if "=" in ln)


# ---------------------------------------------------------------- synthesis

_TASKS = {"source": (0, SOURCE_CATALOG), "target": (1, TARGET_CATALOG)}


def _colors(rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """(background, foreground) with a luminance gap of at least 0.2.

    The foreground is the lighter color 80% of the time; the bias keeps
    class shapes visible in per-class mean images.
    """
    while True:
        bg, fg = rng.uniform(0.0, 1.0, 3), rng.uniform(0.0, 1.0, 3)
        if abs(fg.mean() - bg.mean()) >= 0.2:
            break
    dark, light = (bg, fg) if bg.mean() < fg.mean() else (fg, bg)
    return (light, dark) if rng.random() < 0.2 else (dark, light)


def _paint(mask: np.ndarray, bg: np.ndarray, fg: np.ndarray) -> np.ndarray:
    m = mask.astype(np.float64)[None]
    return bg[:, None, None] * (1 - m) + fg[:, None, None] * m


def _draw(task: str, cls: int, h: int, w: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    bg, fg = _colors(rng)
    size = min(h, w)
    period = rng.uniform(size / 8, size / 3)
    phase = rng.uniform(0, period)
    cy, cx = rng.uniform(0.3 * h, 0.7 * h), rng.uniform(0.3 * w, 0.7 * w)
    if task == "source":
        if cls == 0:
            mask = ((yy + phase) % period) < period / 2
        elif cls == 1:
            mask = ((xx + phase) % period) < period / 2
        elif cls == 2:
            cell = rng.uniform(size / 10, size / 4)
            mask = (np.floor((yy + phase) / cell) + np.floor((xx + phase) / cell)) % 2 == 0
        elif cls == 3:
            r = rng.uniform(0.15, 0.35) * size
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
        elif cls == 4:
            s = rng.uniform(0.2, 0.4) * size
            # upright isosceles triangle with apex at (cy - s, cx)
            dy = yy - (cy - s)
            mask = (dy >= 0) & (dy <= 2 * s) & (np.abs(xx - cx) <= dy / 2)
        else:
            img = rng.uniform(0.0, 1.0, (3, h, w))
            return img
    else:
        if cls == 0:
            sign = rng.choice([-1.0, 1.0])
            mask = ((xx + sign * yy + phase) % period) < period / 2
        elif cls == 1:
            d = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)
            mask = ((d + phase) % period) < period / 2
        elif cls == 2:
            arm = rng.uniform(0.2, 0.4) * size
            t = rng.uniform(1.0, max(1.5, size / 12))
            mask = ((np.abs(yy - cy) <= t) & (np.abs(xx - cx) <= arm)) | ((np.abs(xx - cx) <= t) & (np.abs(yy - cy) <= arm))
        elif cls == 3:
            theta = rng.uniform(0, 2 * np.pi)
            proj = (xx - w / 2) * np.cos(theta) + (yy - h / 2) * np.sin(theta)
            t = (proj - proj.min()) / max(proj.max() - proj.min(), 1e-9)
            img = bg[:, None, None] * (1 - t[None]) + fg[:, None, None] * t[None]
            return img
        elif cls == 4:
            mask = rng.uniform(0, 1, (h, w)) < rng.uniform(0.04, 0.12)
        else:
            mask = np.zeros((h, w), dtype=bool)
    return _paint(mask, bg, fg)


def synthesize_dataset(task: str, n_per_class: int, resolution=(32, 32), seed: int = 0) -> tuple[list[LabeledImage], ClassCatalog]:
    """Procedurally drawn 6-class corpus; every image depends only on (seed, task, class, index)."""
    if task not in _TASKS:
        raise ConfigurationError(f"task must be 'source' or 'target', got {task!r}")
    h, w = resolution
    if h < 8 or w < 8:
        raise ConfigurationError(f"synthetic resolution must be at least 8x8, got {h}x{w}")
    if n_per_class < 1:
        raise ConfigurationError("n_per_class must be >= 1")
    code, names = _TASKS[task]
    images = []
    for cls, name in enumerate(names):
        for i in range(n_per_class):
            rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, code, cls, i])))
            img = _draw(task, cls, h, w, rng)
            img = img + rng.normal(0.0, rng.uniform(0.02, 0.08), img.shape)
            px = np.clip(img, 0.0, 1.0).astype(np.float32)
            images.append(LabeledImage(px, cls, f"{task}/{name}/{name}-{i:05d}"))
    return images, ClassCatalog(names)
