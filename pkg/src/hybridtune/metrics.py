"""Confusion matrices and accuracy / precision / recall / F1 reports.

Rows of the matrix are true labels, columns predicted labels. Every metric
is computed with exact rational arithmetic and rounded to float once, so
identities such as weighted recall == accuracy hold bit-for-bit.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import InputError


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # (C, C) int64, rows = truth, cols = prediction
    catalog: tuple[str, ...]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def tp(self, c: int) -> int:
        return int(self.counts[c, c])

    def fp(self, c: int) -> int:
        return int(self.counts[:, c].sum()) - self.tp(c)

    def fn(self, c: int) -> int:
        return int(self.counts[c, :].sum()) - self.tp(c)

    def tn(self, c: int) -> int:
        return self.total - self.tp(c) - self.fp(c) - self.fn(c)

    def worst_confusions(self, k: int = 3) -> list[tuple[str, str, int]]:
        """Largest off-diagonal cells as (true, predicted, count), ties in row-major order."""
        cells = [
            (int(self.counts[t, p]), t, p)
            for t in range(len(self.catalog))
            for p in range(len(self.catalog))
            if t != p and self.counts[t, p] > 0
        ]
        cells.sort(key=lambda c: (-c[0], c[1], c[2]))
        return [(self.catalog[t], self.catalog[p], n) for n, t, p in cells[:k]]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["true\\predicted", *self.catalog])
        for name, row in zip(self.catalog, self.counts):
            w.writerow([name, *(int(v) for v in row)])
        return buf.getvalue()


def confusion_matrix(truths: Sequence[int], predictions: Sequence[int], catalog: Sequence[str]) -> ConfusionMatrix:
    catalog = tuple(catalog)
    t = np.asarray(truths, dtype=np.int64).reshape(-1)
    p = np.asarray(predictions, dtype=np.int64).reshape(-1)
    if t.shape != p.shape:
        raise InputError(f"{len(t)} truths but {len(p)} predictions")
    c = len(catalog)
    if len(t) and (min(t.min(), p.min()) < 0 or max(t.max(), p.max()) >= c):
        raise InputError(f"labels must lie in [0, {c})")
    counts = np.zeros((c, c), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    return ConfusionMatrix(counts, catalog)


@dataclass
class ClassMetrics:
    name: str
    precision: float
    recall: float
    f1: float
    support: int
    undefined: tuple[str, ...] = ()  # metrics whose 0/0 was replaced by 0


@dataclass
class MetricsReport:
    per_class: list[ClassMetrics]
    accuracy: float
    weighted: dict[str, float]
    macro: dict[str, float]
    total: int
    worst_confusions: list[tuple[str, str, int]] = field(default_factory=list)

    @property
    def flagged(self) -> list[tuple[str, str]]:
        return [(c.name, m) for c in self.per_class for m in c.undefined]

    def headline(self, averaging: str = "weighted") -> dict[str, float]:
        agg = self.weighted if averaging == "weighted" else self.macro
        return {"Accuracy": self.accuracy, "Precision": agg["precision"], "Recall": agg["recall"], "F1 Score": agg["f1"]}


def _ratio(num: int | Fraction, den: int | Fraction) -> tuple[Fraction, bool]:
    if den == 0:
        return Fraction(0), True
    return Fraction(num) / Fraction(den), False


def exact_metrics(m: ConfusionMatrix) -> dict:
    """Per-class and aggregate metrics as Fractions."""
    total = m.total
    if total <= 0:
        raise InputError("confusion matrix is empty")
    per = []
    for c, name in enumerate(m.catalog):
        tp, fp, fn = m.tp(c), m.fp(c), m.fn(c)
        p, p_undef = _ratio(tp, tp + fp)
        r, r_undef = _ratio(tp, tp + fn)
        f1, f_undef = _ratio(2 * p * r, p + r)
        undef = tuple(k for k, u in (("precision", p_undef), ("recall", r_undef), ("f1", f_undef)) if u)
        per.append({"name": name, "precision": p, "recall": r, "f1": f1, "support": tp + fn, "undefined": undef})
    accuracy = Fraction(sum(m.tp(c) for c in range(len(m.catalog))), total)
    keys = ("precision", "recall", "f1")
    weighted = {k: sum(Fraction(x["support"], total) * x[k] for x in per) for k in keys}
    macro = {k: sum(x[k] for x in per) / len(per) for k in keys}
    return {"per_class": per, "accuracy": accuracy, "weighted": weighted, "macro": macro, "total": total}


def compute_metrics(m: ConfusionMatrix) -> MetricsReport:
    ex = exact_metrics(m)
    per = [
        ClassMetrics(x["name"], float(x["precision"]), float(x["recall"]), float(x["f1"]), x["support"], x["undefined"])
        for x in ex["per_class"]
    ]
    return MetricsReport(
        per,
        float(ex["accuracy"]),
        {k: float(v) for k, v in ex["weighted"].items()},
        {k: float(v) for k, v in ex["macro"].items()},
        ex["total"],
        m.worst_confusions(),
    )


COLUMNS = ("Accuracy", "Precision", "Recall", "F1 Score")


def report_table(rows: Sequence[tuple[str, dict[str, float]]], name_header: str = "Model") -> str:
    """Aligned text table with Accuracy / Precision / Recall / F1 Score columns."""
    width = max([len(name_header)] + [len(n) for n, _ in rows])
    lines = [f"{name_header:<{width}}  " + "  ".join(f"{c:>9}" for c in COLUMNS)]
    for name, vals in rows:
        lines.append(f"{name:<{width}}  " + "  ".join(f"{vals[c]:>9.3f}" for c in COLUMNS))
    return "\n".join(lines) + "\n"


def report_text(report: MetricsReport, name: str = "model") -> str:
    out = [report_table([(name, report.headline("weighted"))])]
    out.append(f"macro: precision={report.macro['precision']:.3f} recall={report.macro['recall']:.3f} f1={report.macro['f1']:.3f}\n")
    width = max(len(c.name) for c in report.per_class)
    out.append(f"\n{'class':<{width}}  precision     recall         f1  support\n")
    for c in report.per_class:
        flag = f"  (0/0: {','.join(c.undefined)})" if c.undefined else ""
        out.append(f"{c.name:<{width}}  {c.precision:9.3f}  {c.recall:9.3f}  {c.f1:9.3f}  {c.support:7d}{flag}\n")
    if report.worst_confusions:
        out.append("\nmost confused (true -> predicted):\n")
        for t, p, n in report.worst_confusions:
            out.append(f"  {t} -> {p}: {n}\n")
    return "".join(out)


def report_csv(report: MetricsReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scope", "class", "accuracy", "precision", "recall", "f1", "support", "undefined"])
    for c in report.per_class:
        w.writerow(["class", c.name, "", repr(c.precision), repr(c.recall), repr(c.f1), c.support, ";".join(c.undefined)])
    for scope, agg in (("weighted", report.weighted), ("macro", report.macro)):
        w.writerow([scope, "", repr(report.accuracy), repr(agg["precision"]), repr(agg["recall"]), repr(agg["f1"]), report.total, ""])
    return buf.getvalue()
