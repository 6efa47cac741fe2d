"""Confusion matrices, macro-averaged precision/recall/F1 and report files."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import CoverageError, ValidationError


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Counts with rows = true class and columns = predicted class."""

    counts: np.ndarray
    label_order: tuple[str, ...]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def normalized(self) -> np.ndarray:
        rows = self.counts.sum(axis=1, keepdims=True)
        return np.divide(self.counts, rows, out=np.zeros(self.counts.shape), where=rows > 0)


@dataclass(frozen=True, eq=False)
class MetricReport:
    label_order: tuple[str, ...]
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray | None = None

    @classmethod
    def from_per_class(cls, label_order, precision, recall, support=None) -> MetricReport:
        p = np.asarray(precision, dtype=np.float64)
        r = np.asarray(recall, dtype=np.float64)
        denom = p + r
        f1 = np.divide(2 * p * r, denom, out=np.zeros_like(denom), where=denom > 0)
        return cls(tuple(label_order), p, r, f1, None if support is None else np.asarray(support))

    @property
    def macro_precision(self) -> float:
        return float(np.mean(self.precision))

    @property
    def macro_recall(self) -> float:
        return float(np.mean(self.recall))

    @property
    def macro_f1(self) -> float:
        return float(np.mean(self.f1))

    @property
    def empty_classes(self) -> tuple[str, ...]:
        if self.support is None:
            return ()
        return tuple(c for c, s in zip(self.label_order, self.support) if s == 0)


def confusion(y_true, y_pred, label_order: Sequence[str]) -> ConfusionMatrix:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise ValidationError("y_true and y_pred must be 1-D and of equal length")
    order = tuple(label_order)
    lookup = {c: i for i, c in enumerate(order)}
    unknown = sorted({str(v) for v in np.concatenate([y_true, y_pred]).tolist() if v not in lookup})
    if unknown:
        raise ValidationError(f"labels {unknown} are not in label order {order}")
    t = np.array([lookup[v] for v in y_true.tolist()], dtype=np.int64)
    p = np.array([lookup[v] for v in y_pred.tolist()], dtype=np.int64)
    counts = np.zeros((len(order), len(order)), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    return ConfusionMatrix(counts, order)


def macro_metrics(cm: ConfusionMatrix) -> MetricReport:
    """Per-class and macro precision/recall/F1.

    Undefined ratios (empty predicted column or empty true row) count as 0
    and stay in the macro mean.
    """
    counts = cm.counts.astype(np.float64)
    if counts.size == 0:
        raise ValidationError("confusion matrix is empty")
    tp = np.diag(counts)
    col = counts.sum(axis=0)
    row = counts.sum(axis=1)
    precision = np.divide(tp, col, out=np.zeros_like(tp), where=col > 0)
    recall = np.divide(tp, row, out=np.zeros_like(tp), where=row > 0)
    return MetricReport.from_per_class(cm.label_order, precision, recall, support=cm.counts.sum(axis=1))


def macro_recall(y_true, y_pred, label_order: Sequence[str]) -> float:
    return macro_metrics(confusion(y_true, y_pred, label_order)).macro_recall


def macro_f1(y_true, y_pred, label_order: Sequence[str]) -> float:
    return macro_metrics(confusion(y_true, y_pred, label_order)).macro_f1


def _csv(rows: list[list]) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _fmt(x: float) -> str:
    return f"{x:.4f}"


@dataclass(frozen=True, eq=False)
class Report:
    confusion: ConfusionMatrix
    metrics: MetricReport
    title: str = ""

    def metrics_csv(self) -> str:
        m = self.metrics
        rows = [["label", "precision", "recall", "f1", "support", "flag"]]
        support = m.support if m.support is not None else [""] * len(m.label_order)
        for i, c in enumerate(m.label_order):
            flag = "empty_in_test" if c in m.empty_classes else ""
            rows.append([c, _fmt(m.precision[i]), _fmt(m.recall[i]), _fmt(m.f1[i]), str(support[i]), flag])
        rows.append(["macro", _fmt(m.macro_precision), _fmt(m.macro_recall), _fmt(m.macro_f1), str(self.confusion.total), ""])
        return _csv(rows)

    def confusion_csv(self) -> str:
        order = list(self.confusion.label_order)
        return _csv([["true\\pred"] + order] + [[c] + [str(int(v)) for v in row] for c, row in zip(order, self.confusion.counts)])

    def confusion_norm_csv(self) -> str:
        order = list(self.confusion.label_order)
        norm = self.confusion.normalized()
        return _csv([["true\\pred"] + order] + [[c] + [_fmt(v) for v in row] for c, row in zip(order, norm)])

    def text(self) -> str:
        m = self.metrics
        width = max(len(c) for c in m.label_order) + 2
        lines = [self.title] if self.title else []
        lines.append(f"{'class':<{width}}{'precision':>10}{'recall':>10}{'f1':>10}{'support':>9}")
        for i, c in enumerate(m.label_order):
            mark = " *" if c in m.empty_classes else ""
            support = "" if m.support is None else str(int(m.support[i]))
            lines.append(f"{c:<{width}}{_fmt(m.precision[i]):>10}{_fmt(m.recall[i]):>10}{_fmt(m.f1[i]):>10}{support:>9}{mark}")
        lines.append(f"{'macro':<{width}}{_fmt(m.macro_precision):>10}{_fmt(m.macro_recall):>10}{_fmt(m.macro_f1):>10}{self.confusion.total:>9}")
        if m.empty_classes:
            lines.append("* class absent from the evaluated split; precision/recall reported as 0")
        lines.append("")
        lines.append("row-normalised confusion (rows = true, columns = predicted)")
        norm = self.confusion.normalized()
        cw = max(8, max(len(c) for c in m.label_order) + 1)
        lines.append(" " * width + "".join(f"{c[:cw - 1]:>{cw}}" for c in m.label_order))
        for c, row in zip(m.label_order, norm):
            lines.append(f"{c:<{width}}" + "".join(f"{_fmt(v):>{cw}}" for v in row))
        return "\n".join(lines) + "\n"

    def write(self, out_dir) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files = {
            "metrics.csv": self.metrics_csv(),
            "confusion.csv": self.confusion_csv(),
            "confusion_norm.csv": self.confusion_norm_csv(),
            "report.txt": self.text(),
        }
        paths = []
        for name, body in files.items():
            path = out / name
            path.write_text(body, encoding="utf-8")
            paths.append(path)
        return paths


def report(
    expected: Mapping[str, str],
    predicted: Mapping[str, str],
    label_order: Sequence[str],
    title: str = "",
) -> Report:
    """Build a report for one evaluated split.

    ``expected`` maps every window key of the split to its true label and
    ``predicted`` maps window keys to predicted labels. Any split window
    without a prediction raises :class:`CoverageError`.
    """
    missing = [k for k in expected if k not in predicted]
    if missing:
        raise CoverageError(missing)
    keys = list(expected)
    cm = confusion([expected[k] for k in keys], [predicted[k] for k in keys], label_order)
    return Report(cm, macro_metrics(cm), title)
