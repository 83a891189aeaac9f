"""Hybrid transfer learning for waste image classification.

A small numpy autodiff core, convolutional networks grouped into freezable
blocks, feature-extraction / fine-tuning / hybrid (gradual unfreezing with
discriminative learning rates) training, metrics, Grad-CAM localisation and
confidence-threshold routing.
"""

from .checkpoint import load_checkpoint, save_checkpoint
from .nn import Network, build_network, forward, replace_head, set_frozen
from .routing import HUMAN_SORT, route_waste

__version__ = "0.1.0"

__all__ = [
    "HUMAN_SORT",
    "Network",
    "build_network",
    "forward",
    "load_checkpoint",
    "replace_head",
    "route_waste",
    "save_checkpoint",
    "set_frozen",
]
