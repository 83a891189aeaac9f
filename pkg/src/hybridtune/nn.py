"""Layer groups, network topologies and forward inference.

A *group* is the unit of freezing: a conv block (conv + relu + optional
maxpool) or the dense classifier head. Depth 0 is nearest the input and the
head always has the highest depth index.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import tensor as T
from .errors import ConfigurationError, DimensionError
from .rng import Xoshiro256
from .tensor import Tensor


@dataclass(frozen=True)
class ConvSpec:
    filters: int
    kernel: int = 3
    stride: int = 1
    padding: int = 1
    pool: Optional[int] = 2


# conv blocks below the flatten + dense head
ARCHITECTURES: dict[str, tuple[ConvSpec, ...]] = {
    "cnn-small": (ConvSpec(16), ConvSpec(32)),
    "cnn-medium": (ConvSpec(16), ConvSpec(32), ConvSpec(64), ConvSpec(64)),
}


@dataclass
class LayerGroup:
    name: str
    depth_index: int
    kind: str  # "conv" or "dense"
    parameters: list[Tensor]
    frozen: bool = False
    spec: Optional[ConvSpec] = None

    @property
    def weight(self) -> Tensor:
        return self.parameters[0]

    @property
    def bias(self) -> Tensor:
        return self.parameters[1]

    def conv_activation(self, x: Tensor) -> Tensor:
        """Conv + relu, before pooling."""
        return T.relu(T.conv2d(x, self.weight, self.bias, self.spec.stride, self.spec.padding))

    def pool(self, a: Tensor) -> Tensor:
        return T.maxpool2d(a, self.spec.pool, self.spec.pool) if self.spec.pool else a

    def __call__(self, x: Tensor) -> Tensor:
        if self.kind == "conv":
            return self.pool(self.conv_activation(x))
        return T.dense(T.flatten(x), self.weight, self.bias)


@dataclass
class Network:
    groups: list[LayerGroup]
    architecture_id: str
    input_shape: tuple[int, int, int]
    class_labels: list[str]
    history_blob: bytes = field(default=b"", repr=False)

    @property
    def head(self) -> LayerGroup:
        return self.groups[-1]

    @property
    def max_depth(self) -> int:
        return self.groups[-1].depth_index

    @property
    def conv_groups(self) -> list[LayerGroup]:
        return [g for g in self.groups if g.kind == "conv"]

    @property
    def dtype(self):
        return self.head.weight.dtype

    def sync_grad_flags(self) -> None:
        """Make parameter ``requires_grad`` follow the frozen flags."""
        for g in self.groups:
            for p in g.parameters:
                p.requires_grad = not g.frozen

    def unfrozen_depths(self) -> tuple[int, ...]:
        return tuple(g.depth_index for g in self.groups if not g.frozen)

    def check_input(self, batch) -> Tensor:
        x = batch if isinstance(batch, Tensor) else Tensor(np.asarray(batch, dtype=self.dtype))
        if x.data.ndim != 4 or tuple(x.shape[1:]) != tuple(self.input_shape):
            raise DimensionError(f"batch shape {x.shape} does not match input shape {self.input_shape}")
        return x

    def __call__(self, batch) -> Tensor:
        return forward(self, batch)

    def parameter_arrays(self) -> list[np.ndarray]:
        return [p.data for g in self.groups for p in g.parameters]


def forward(net: Network, batch) -> Tensor:
    """Logits of shape (N, len(class_labels)); records a graph when parameters require grad."""
    x = net.check_input(batch)
    for g in net.groups:
        x = g(x)
    return x


def predict_proba(net: Network, batch, batch_size: int = 256) -> np.ndarray:
    batch = np.asarray(batch)
    out = []
    with T.no_grad():
        for i in range(0, len(batch), batch_size):
            logits = forward(net, batch[i : i + batch_size]).data.astype(np.float64)
            out.append(T.softmax(logits))
    if not out:
        return np.zeros((0, len(net.class_labels)))
    return np.concatenate(out)


def _trunk_output_shape(specs: Sequence[ConvSpec], input_shape) -> tuple[int, int, int]:
    c, h, w = input_shape
    for s in specs:
        h = T.conv_output_size(h, s.kernel, s.stride, s.padding)
        w = T.conv_output_size(w, s.kernel, s.stride, s.padding)
        if h < 1 or w < 1:
            raise ConfigurationError(f"input {input_shape} too small for the topology")
        c = s.filters
        if s.pool:
            if s.pool > h or s.pool > w:
                raise ConfigurationError(f"input {input_shape} too small for the topology")
            h = (h - s.pool) // s.pool + 1
            w = (w - s.pool) // s.pool + 1
    return c, h, w


def _init_uniform(rng: Optional[Xoshiro256], shape, fan_in: int, dtype) -> Tensor:
    size = int(np.prod(shape))
    if rng is None:
        return Tensor(np.zeros(shape, dtype=dtype))
    bound = math.sqrt(6.0 / fan_in)
    return Tensor(rng.uniform_array(-bound, bound, size).reshape(shape).astype(dtype))


def _dense_head(depth: int, fan_in: int, n_out: int, rng, dtype) -> LayerGroup:
    if n_out < 1:
        raise ConfigurationError("label list must not be empty")
    w = _init_uniform(rng, (fan_in, n_out), fan_in, dtype)
    b = Tensor(np.zeros(n_out, dtype=dtype))
    return LayerGroup("head", depth, "dense", [w, b])


def build_from_specs(
    specs: Sequence[ConvSpec],
    input_shape,
    class_labels: Sequence[str],
    seed: Optional[int],
    architecture_id: str = "custom",
    dtype=T.DEFAULT_DTYPE,
) -> Network:
    """Assemble conv groups described by ``specs`` plus a dense head.

    ``seed=None`` leaves every parameter zero (used as a skeleton when loading).
    """
    input_shape = tuple(int(v) for v in input_shape)
    if len(input_shape) != 3 or min(input_shape) < 1:
        raise ConfigurationError(f"input shape must be C,H,W positive, got {input_shape}")
    labels = list(class_labels)
    if not labels:
        raise ConfigurationError("label list must not be empty")
    rng = Xoshiro256(seed) if seed is not None else None
    groups = []
    c = input_shape[0]
    for d, s in enumerate(specs):
        fan_in = c * s.kernel * s.kernel
        w = _init_uniform(rng, (s.filters, c, s.kernel, s.kernel), fan_in, dtype)
        b = Tensor(np.zeros(s.filters, dtype=dtype))
        groups.append(LayerGroup(f"conv{d}", d, "conv", [w, b], spec=s))
        c = s.filters
    oc, oh, ow = _trunk_output_shape(specs, input_shape)
    groups.append(_dense_head(len(specs), oc * oh * ow, len(labels), rng, dtype))
    return Network(groups, architecture_id, input_shape, labels)


def build_network(architecture_id: str, input_shape, class_labels: Sequence[str], seed: int, dtype=T.DEFAULT_DTYPE) -> Network:
    if architecture_id not in ARCHITECTURES:
        raise ConfigurationError(f"unknown architecture {architecture_id!r}; choose from {sorted(ARCHITECTURES)}")
    return build_from_specs(ARCHITECTURES[architecture_id], input_shape, class_labels, seed, architecture_id, dtype)


def replace_head(net: Network, class_labels: Sequence[str], seed: int) -> Network:
    """Swap in a freshly initialized classifier for ``class_labels``.

    The trunk is copied, so later training of the result leaves ``net`` intact.
    """
    labels = list(class_labels)
    if not labels:
        raise ConfigurationError("label list must not be empty")
    old = net.head
    fan_in = old.weight.shape[0]
    head = _dense_head(old.depth_index, fan_in, len(labels), Xoshiro256(seed), net.dtype)
    trunk = clone_network(net).groups[:-1]
    return Network(trunk + [head], net.architecture_id, net.input_shape, labels)


def set_frozen(net: Network, depth_range, frozen: bool) -> None:
    """Set the frozen flag on every group whose depth is in ``depth_range``."""
    depths = {g.depth_index: g for g in net.groups}
    wanted = list(depth_range)
    for d in wanted:
        if d not in depths:
            raise ConfigurationError(f"depth {d} out of range 0..{net.max_depth}")
    for d in wanted:
        depths[d].frozen = frozen
    net.sync_grad_flags()


def clone_network(net: Network) -> Network:
    groups = [
        LayerGroup(g.name, g.depth_index, g.kind, [Tensor(p.data.copy()) for p in g.parameters], g.frozen, g.spec)
        for g in net.groups
    ]
    return Network(groups, net.architecture_id, net.input_shape, list(net.class_labels), net.history_blob)


def parameter_checksums(net: Network) -> dict[str, str]:
    return {
        f"{g.name}.{i}": hashlib.sha256(p.data.tobytes()).hexdigest()
        for g in net.groups
        for i, p in enumerate(g.parameters)
    }
