"""Confidence-threshold routing of classified waste to bins."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import InputError

HUMAN_SORT = "HUMAN_SORT"
DEFAULT_THRESHOLD = 0.9


@dataclass(frozen=True)
class RoutingDecision:
    label: Optional[str]  # None means the human-sort bin
    class_index: int
    probability: float
    threshold: float

    @property
    def bin(self) -> str:
        return HUMAN_SORT if self.label is None else self.label

    def line(self) -> str:
        return f"decision={self.bin} probability={self.probability:.6f} threshold={self.threshold:.6f}"


def route_waste(probabilities: Sequence[float], catalog: Sequence[str], threshold: float = DEFAULT_THRESHOLD) -> RoutingDecision:
    """Route to the argmax class bin only when its probability strictly exceeds ``threshold``."""
    p = np.asarray(probabilities, dtype=np.float64).reshape(-1)
    if len(p) != len(catalog) or len(p) == 0:
        raise InputError(f"{len(p)} probabilities for {len(catalog)} classes")
    if not 0.0 <= threshold <= 1.0:
        raise InputError(f"threshold must lie in [0, 1], got {threshold}")
    if not np.all(np.isfinite(p)) or p.min() < 0 or abs(p.sum() - 1.0) > 1e-6:
        raise InputError("probabilities must be non-negative and sum to 1 within 1e-6")
    c = int(np.argmax(p))  # first index wins ties
    prob = float(p[c])
    return RoutingDecision(catalog[c] if prob > threshold else None, c, prob, float(threshold))
