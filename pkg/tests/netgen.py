"""Random small float64 networks for gradient checking."""

from __future__ import annotations

import numpy as np

from hybridtune import tensor as T
from hybridtune.nn import ConvSpec, Network, build_from_specs, forward
from hybridtune.tensor import Tensor

KINK_MARGIN = 1e-3


def _kink_free(net: Network, x: np.ndarray) -> bool:
    """No relu input or max-pool runner-up within KINK_MARGIN of switching."""
    with T.no_grad():
        h = Tensor(x)
        for g in net.groups:
            if g.kind != "conv":
                break
            z = T.conv2d(h, g.weight, g.bias, g.spec.stride, g.spec.padding)
            if np.abs(z.data).min() < KINK_MARGIN:
                return False
            a = T.relu(z)
            if g.spec.pool:
                k = g.spec.pool
                n, c, hh, ww = a.shape
                ho, wo = (hh - k) // k + 1, (ww - k) // k + 1
                win = a.data[:, :, : ho * k, : wo * k].reshape(n, c, ho, k, wo, k).transpose(0, 1, 2, 4, 3, 5)
                srt = np.sort(win.reshape(n, c, ho, wo, k * k), axis=-1)
                top, second = srt[..., -1], srt[..., -2]
                if np.any((top > 0) & (top - second < KINK_MARGIN)):
                    return False
            h = g(h)
    return True


def random_network(rng: np.random.Generator):
    """Returns (net, x, labels) with a kink-free operating point."""
    while True:
        c = int(rng.integers(1, 4))
        h = int(rng.integers(5, 9))
        w = int(rng.integers(5, 9))
        specs = []
        ch, hh, ww = c, h, w
        for _ in range(int(rng.integers(1, 3))):
            k = int(rng.integers(2, 4))
            s = int(rng.integers(1, 3))
            p = int(rng.integers(0, 2))
            ho = (hh + 2 * p - k) // s + 1
            wo = (ww + 2 * p - k) // s + 1
            if ho < 1 or wo < 1:
                break
            pool = 2 if (ho >= 2 and wo >= 2 and rng.random() < 0.5) else None
            specs.append(ConvSpec(int(rng.integers(2, 4)), k, s, p, pool))
            hh, ww = (ho // 2, wo // 2) if pool else (ho, wo)
        if not specs:
            continue
        n_cls = int(rng.integers(2, 5))
        net = build_from_specs(specs, (c, h, w), [f"c{i}" for i in range(n_cls)], int(rng.integers(0, 2**31)), dtype=np.float64)
        for g in net.groups:
            g.bias.data[:] = rng.normal(0, 0.3, g.bias.shape)
        net.sync_grad_flags()
        x = rng.normal(0, 1, (2, c, h, w))
        labels = rng.integers(0, n_cls, 2)
        if _kink_free(net, x):
            return net, x, labels


def loss_value(net: Network, x, labels) -> float:
    with T.no_grad():
        loss, _ = T.softmax_cross_entropy(forward(net, x), labels)
    return float(loss.data)


def toy_localization(rng: np.random.Generator, size: int = 8):
    """Single-conv network plus an image with one class-discriminative bright pixel.

    Returns (net, image, (row, col)). Filter 0 responds to brightness and
    feeds class 0 positively, so the bright pixel carries class-0 evidence.
    """
    net = build_from_specs([ConvSpec(2, 3, 1, 1, None)], (3, size, size), ["on", "off"], int(rng.integers(0, 2**31)),
                           dtype=np.float64)
    conv, head = net.groups
    conv.weight.data[0] = rng.uniform(0.5, 1.0, (3, 3, 3))
    conv.weight.data[1] = rng.uniform(-1.0, -0.5, (3, 3, 3))
    conv.bias.data[:] = [-0.5, 0.5]
    hw = size * size
    head.weight.data[:] = 0.0
    head.weight.data[:hw, 0] = rng.uniform(0.05, 0.1, hw)
    head.weight.data[hw:, 1] = rng.uniform(0.05, 0.1, hw)
    head.bias.data[:] = 0.0
    image = rng.uniform(0.0, 0.1, (3, size, size))
    r, c = (int(v) for v in rng.integers(0, size, 2))
    image[:, r, c] = 1.0
    return net, image, (r, c)
