"""Confusion-matrix IoU metrics, grouped means, and report serialization.

IoU for class c is TP/(TP+FP+FN) read off a confusion matrix whose rows
are ground truth and columns are predictions. A class absent from both
ground truth and predictions has denominator zero; its IoU is undefined
and excluded from every group mean rather than counted as zero.

Grouping follows the continual protocol: `initial` covers the first
step's classes, `incremented` everything added later, `all` every seen
class including background. The running average metric is the mean of
`all` over the steps completed so far, step 1 included.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

__all__ = [
    "ConfusionMatrix",
    "StepReport",
    "avg_metric",
    "write_csv",
    "write_text_report",
]


class ConfusionMatrix:
    """Pixel counts over a fixed class-id list; pure addition, mergeable."""

    def __init__(self, classes: list[int]):
        if len(set(classes)) != len(classes):
            raise ValueError(f"duplicate class ids: {classes}")
        self.classes = list(int(c) for c in classes)
        self._row = {c: i for i, c in enumerate(self.classes)}
        k = len(self.classes)
        self.counts = np.zeros((k, k), dtype=np.int64)

    def add(self, gt: np.ndarray, pred: np.ndarray) -> None:
        """Accumulate one image. Pixels whose gt id is not tracked are skipped."""
        gt = np.asarray(gt).ravel()
        pred = np.asarray(pred).ravel()
        if gt.shape != pred.shape:
            raise ValueError(f"gt and prediction sizes differ: {gt.shape} vs {pred.shape}")
        k = len(self.classes)
        lut = np.full(max(max(self.classes), int(gt.max(initial=0)), int(pred.max(initial=0))) + 1, -1, dtype=np.int64)
        for c, i in self._row.items():
            lut[c] = i
        rows = lut[gt]
        cols = lut[pred]
        keep = rows >= 0
        if not np.all(cols[keep] >= 0):
            bad = sorted(set(np.unique(pred[keep & (cols < 0)]).tolist()))
            raise ValueError(f"predictions contain untracked class ids {bad}")
        flat = rows[keep] * k + cols[keep]
        self.counts += np.bincount(flat, minlength=k * k).reshape(k, k)

    def merge(self, other: "ConfusionMatrix") -> None:
        if other.classes != self.classes:
            raise ValueError("cannot merge matrices over different class lists")
        self.counts += other.counts

    def iou(self, c: int) -> float | None:
        """TP/(TP+FP+FN), or None when the class never occurs at all."""
        i = self._row[c]
        tp = int(self.counts[i, i])
        fp = int(self.counts[:, i].sum()) - tp
        fn = int(self.counts[i, :].sum()) - tp
        denom = tp + fp + fn
        if denom == 0:
            return None
        return tp / denom

    def per_class_iou(self) -> dict[int, float | None]:
        return {c: self.iou(c) for c in self.classes}

    def miou(self, group: list[int]) -> float | None:
        """Unweighted mean over the group's defined IoUs; None if all undefined."""
        defined = [v for v in (self.iou(c) for c in group if c in self._row) if v is not None]
        if not defined:
            return None
        return float(np.mean(defined))


@dataclass
class StepReport:
    step: int
    per_class_iou: dict[int, float | None] = field(default_factory=dict)
    miou_initial: float | None = None
    miou_incremented: float | None = None
    miou_all: float | None = None
    loss_pseudo: float = 0.0
    loss_distill: float = 0.0
    seconds: float = 0.0


def avg_metric(per_step_miou_all: list[float]) -> float:
    """Mean test mIoU over completed steps; the continual 'avg' score."""
    if not per_step_miou_all:
        raise ValueError("avg metric over zero steps")
    return float(np.mean(per_step_miou_all))


def _fmt(value: float | None) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "nan"
    return repr(float(value))


CSV_COLUMNS = "step,miou_initial,miou_incremented,miou_all,avg_so_far,loss_pseudo,loss_distill,seconds"


def write_csv(reports: list[StepReport], path: str | Path) -> None:
    lines = [CSV_COLUMNS]
    completed: list[float] = []
    for r in reports:
        completed.append(r.miou_all if r.miou_all is not None else float("nan"))
        lines.append(
            ",".join(
                [
                    str(r.step),
                    _fmt(r.miou_initial),
                    _fmt(r.miou_incremented),
                    _fmt(r.miou_all),
                    _fmt(avg_metric(completed)),
                    _fmt(r.loss_pseudo),
                    _fmt(r.loss_distill),
                    _fmt(r.seconds),
                ]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path: str | Path) -> list[dict[str, float]]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != CSV_COLUMNS:
        raise DataError(f"{path}: unexpected CSV header")
    names = CSV_COLUMNS.split(",")
    return [dict(zip(names, (float(v) for v in line.split(",")))) for line in lines[1:]]


def write_text_report(reports: list[StepReport], path: str | Path) -> None:
    """Human-readable per-step table: initial / incremented / all / avg."""
    header = f"{'step':>4}  {'initial':>8}  {'incremented':>11}  {'all':>8}  {'avg':>8}"
    lines = [header, "-" * len(header)]
    completed: list[float] = []

    def cell(v: float | None, width: int) -> str:
        return f"{'n/a':>{width}}" if v is None else f"{v:>{width}.4f}"

    for r in reports:
        completed.append(r.miou_all if r.miou_all is not None else float("nan"))
        lines.append(
            f"{r.step:>4}  {cell(r.miou_initial, 8)}  {cell(r.miou_incremented, 11)}  "
            f"{cell(r.miou_all, 8)}  {cell(avg_metric(completed), 8)}"
        )
    Path(path).write_text("\n".join(lines) + "\n")
