"""Gradient-weighted class activation maps and annotated overlays."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import tensor as T
from .dataset import resize_array
from .errors import DataError, InputError, UnsupportedArchitectureError
from .nn import Network
from .ppm import write_ppm
from .tensor import Tensor

BLEND = 0.5
RED = np.array([1.0, 0.0, 0.0])


@dataclass
class Heatmap:
    values: np.ndarray  # (H, W) in [0, 1]
    target_class: int
    probability: float
    probabilities: np.ndarray

    @property
    def predicted_class(self) -> int:
        return int(np.argmax(self.probabilities))


def _frozen_view(p: Tensor) -> Tensor:
    return Tensor(p.data)


def grad_cam(net: Network, image: np.ndarray, target_class: Optional[int] = None) -> Heatmap:
    """Heatmap of the evidence for ``target_class`` (default: the predicted class).

    The target logit is differentiated with respect to the post-relu
    activations of the last conv group; per-channel mean gradients weight
    those maps, and the rectified sum is upsampled to the input size and
    scaled to a maximum of 1.
    """
    conv_idx = [i for i, g in enumerate(net.groups) if g.kind == "conv"]
    if not conv_idx:
        raise UnsupportedArchitectureError("grad_cam needs at least one conv group")
    last = conv_idx[-1]
    x = net.check_input(np.asarray(image, dtype=net.dtype)[None])
    with T.no_grad():
        for g in net.groups[:last]:
            x = g(x)
        g = net.groups[last]
        w, b = (_frozen_view(p) for p in g.parameters)
        act = T.relu(T.conv2d(x, w, b, g.spec.stride, g.spec.padding))
    a = Tensor(act.data, requires_grad=True)
    h = g.pool(a)
    for grp in net.groups[last + 1 :]:
        if grp.kind == "conv":
            h = grp.pool(T.relu(T.conv2d(h, *(_frozen_view(p) for p in grp.parameters), grp.spec.stride, grp.spec.padding)))
        else:
            h = T.dense(T.flatten(h), *(_frozen_view(p) for p in grp.parameters))
    logits = h
    probs = T.softmax(logits.data.astype(np.float64))[0]
    n_classes = logits.shape[1]
    if target_class is None:
        target_class = int(np.argmax(probs))
    if not 0 <= target_class < n_classes:
        raise InputError(f"target class {target_class} outside [0, {n_classes})")
    select = np.zeros((n_classes, 1), dtype=logits.dtype)
    select[target_class, 0] = 1
    score = T.tensor_sum(T.dense(logits, Tensor(select), Tensor(np.zeros(1, dtype=logits.dtype))))
    T.backward(score)
    grads = a.grad[0].astype(np.float64)
    acts = a.data[0].astype(np.float64)
    weights = grads.mean(axis=(1, 2))
    cam = np.maximum(np.tensordot(weights, acts, axes=1), 0.0)
    _, hh, ww = net.input_shape
    if cam.max() > 0:
        cam = cam / cam.max()
        if cam.shape != (hh, ww):
            cam = resize_array(cam[None], hh, ww)[0]
            cam = cam / cam.max()
        values = cam
    else:
        values = np.zeros((hh, ww))
    return Heatmap(values, target_class, float(probs[target_class]), probs)


def overlay(image: np.ndarray, heatmap: np.ndarray, blend: float = BLEND) -> np.ndarray:
    """Shift each pixel toward red by ``blend * heat``; zero heat leaves it unchanged."""
    img = np.asarray(image, dtype=np.float64)
    wgt = blend * np.asarray(heatmap, dtype=np.float64)[None]
    return np.clip(img + wgt * (RED[:, None, None] - img), 0.0, 1.0)


@dataclass
class Caption:
    predicted: str
    actual: str
    loss: float
    probability: float

    def text(self) -> str:
        return f"Prediction/Actual: {self.predicted}/{self.actual}\nLoss/Probability: {self.loss:.2f}/{self.probability:.2f}\n"


def render_annotated(image: np.ndarray, heatmap: Heatmap | np.ndarray, caption: Caption, path) -> tuple[Path, Path]:
    """Write the overlay as P6 PPM and the caption as a sidecar ``.txt``."""
    values = heatmap.values if isinstance(heatmap, Heatmap) else heatmap
    if values.shape != tuple(image.shape[1:]):
        raise InputError(f"heatmap {values.shape} not aligned with image {image.shape[1:]}")
    path = Path(path)
    txt = path.with_suffix(".txt")
    try:
        write_ppm(path, overlay(image, values))
        txt.write_text(caption.text(), encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc
    return path, txt
