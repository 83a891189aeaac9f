"""Training-time augmentation: horizontal flip, rotation, zoom and translation
with nearest-edge fill, sampled bilinearly."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ParameterError


@dataclass(frozen=True)
class AugmentConfig:
    rotation_max_deg: float = 15.0
    zoom_range: tuple[float, float] = (0.9, 1.1)
    translate_max_frac: float = 0.1
    hflip_prob: float = 0.5
    fill: str = "nearest"
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.zoom_range
        if not (0 < lo <= hi):
            raise ConfigurationError(f"zoom_range must satisfy 0 < lo <= hi, got {self.zoom_range}")
        if not 0.0 <= self.hflip_prob <= 1.0:
            raise ConfigurationError("hflip_prob must lie in [0, 1]")
        if self.rotation_max_deg < 0 or self.translate_max_frac < 0:
            raise ConfigurationError("rotation and translation ranges must be non-negative")
        if self.fill != "nearest":
            raise ConfigurationError(f"only nearest fill is supported, got {self.fill!r}")


IDENTITY = AugmentConfig(rotation_max_deg=0.0, zoom_range=(1.0, 1.0), translate_max_frac=0.0, hflip_prob=0.0)


@dataclass(frozen=True)
class TransformParams:
    angle: float = 0.0  # degrees, counter-clockwise on screen
    scale: float = 1.0
    dx: float = 0.0  # fraction of width, positive moves content right
    dy: float = 0.0  # fraction of height, positive moves content down
    hflip: bool = False


def apply_transform(image: np.ndarray, params: TransformParams) -> np.ndarray:
    """Warp a (C, H, W) image by flip -> rotate -> scale -> translate.

    Each output pixel is mapped back through the inverse transform and
    sampled bilinearly; source coordinates outside the image are clamped to
    the nearest edge pixel.
    """
    if params.scale <= 0:
        raise ParameterError(f"scale must be positive, got {params.scale}")
    c, h, w = image.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    # undo translation, then zoom
    x = (xx - params.dx * w - cx) / params.scale
    y = (yy - params.dy * h - cy) / params.scale
    # undo rotation (image y axis points down)
    a = math.radians(params.angle)
    ca, sa = math.cos(a), math.sin(a)
    xs = ca * x - sa * y + cx
    ys = sa * x + ca * y + cy
    if params.hflip:
        xs = (w - 1) - xs
    xs = np.clip(xs, 0, w - 1)
    ys = np.clip(ys, 0, h - 1)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xs - x0
    fy = ys - y0
    img = image.astype(np.float64, copy=False)
    top = img[:, y0, x0] * (1 - fx) + img[:, y0, x1] * fx
    bot = img[:, y1, x0] * (1 - fx) + img[:, y1, x1] * fx
    out = top * (1 - fy) + bot * fy
    return np.clip(out, 0.0, 1.0).astype(image.dtype)


def sample_params(config: AugmentConfig, rng: np.random.Generator) -> TransformParams:
    t = config.translate_max_frac
    angle = rng.uniform(-config.rotation_max_deg, config.rotation_max_deg)
    scale = rng.uniform(*config.zoom_range)
    dx = rng.uniform(-t, t)
    dy = rng.uniform(-t, t)
    flip = bool(rng.random() < config.hflip_prob)
    return TransformParams(angle, scale, dx, dy, flip)


def random_augment(image: np.ndarray, config: AugmentConfig, rng: np.random.Generator):
    """Draw transform parameters from ``rng`` and apply them.

    Returns ``(augmented, rng)``; the generator is advanced in place.
    """
    return apply_transform(image, sample_params(config, rng)), rng


def image_stream(seed: int, epoch: int, index: int) -> np.random.Generator:
    """Independent generator per (seed, epoch, image index)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, epoch, index])))


def augment_batch(images: np.ndarray, indices, config: AugmentConfig, epoch: int) -> np.ndarray:
    out = np.empty_like(images)
    for k, (img, idx) in enumerate(zip(images, indices)):
        out[k], _ = random_augment(img, config, image_stream(config.seed, epoch, int(idx)))
    return out
