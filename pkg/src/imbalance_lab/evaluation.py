"""Empirical error metrics on labeled test sets."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .instances import Dataset
from .margin import Predictor, decision_scores

__all__ = [
    "ErrorReport",
    "evaluate",
    "evaluate_scores",
    "pairwise_empirical",
    "sandwich_check",
    "merge_reports",
    "save_confusion_csv",
]


@dataclass(frozen=True)
class ErrorReport:
    """Test-set error summary.

    confusion[y, k] counts class-y points predicted as k; pairwise[y, k] is
    the fraction of class-y points whose class-k score strictly beats the
    true-class score. Ties in the argmax go to the smallest class index
    (relevant only for file-loaded features; Gaussian data never ties).
    """

    per_class_error: np.ndarray
    worst_class_error: float
    balanced_error: float
    macro_f1: float
    confusion: np.ndarray
    pairwise: np.ndarray

    @property
    def c(self) -> int:
        return self.confusion.shape[0]

    def to_dict(self) -> dict:
        return {
            "per_class_error": [float(v) for v in self.per_class_error],
            "worst_class_error": float(self.worst_class_error),
            "balanced_error": float(self.balanced_error),
            "macro_f1": float(self.macro_f1),
            "confusion": [[int(v) for v in row] for row in self.confusion],
            "pairwise": [[float(v) for v in row] for row in self.pairwise],
        }

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text


def _macro_f1(confusion: np.ndarray) -> float:
    c = confusion.shape[0]
    f1 = np.zeros(c)
    for y in range(c):
        tp = confusion[y, y]
        fp = confusion[:, y].sum() - tp
        fn = confusion[y, :].sum() - tp
        denom = 2 * tp + fp + fn
        f1[y] = 0.0 if denom == 0 else 2 * tp / denom
    return float(f1.mean())


def evaluate_scores(scores: np.ndarray, y: np.ndarray, c: int) -> ErrorReport:
    """Build an ErrorReport from raw decision scores and labels."""
    scores = np.asarray(scores, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n = y.size
    pred = np.argmax(scores, axis=1)
    confusion = np.zeros((c, c), dtype=np.int64)
    np.add.at(confusion, (y, pred), 1)
    counts = confusion.sum(axis=1)
    if np.any(counts == 0):
        raise ValueError("every class needs at least one test point")
    per_class = 1.0 - np.diag(confusion) / counts
    true_scores = scores[np.arange(n), y]
    beats = (scores > true_scores[:, None]).astype(np.float64)
    pairwise = np.zeros((c, c))
    np.add.at(pairwise, y, beats)
    pairwise /= counts[:, None]
    return ErrorReport(
        per_class_error=per_class,
        worst_class_error=float(per_class.max()),
        balanced_error=float(per_class.mean()),
        macro_f1=_macro_f1(confusion),
        confusion=confusion,
        pairwise=pairwise,
    )


def evaluate(predictor: Predictor, test: Dataset) -> ErrorReport:
    """Per-class, worst-class and balanced errors, macro F1 and confusion."""
    if predictor.c != test.c:
        raise ValueError("predictor and dataset class counts disagree")
    return evaluate_scores(decision_scores(predictor, test.X), test.y, test.c)


def pairwise_empirical(predictor: Predictor, test: Dataset, y: int, k: int) -> float:
    """Fraction of class-y test points where class k outscores class y."""
    if y == k:
        raise ValueError("pairwise rate requires k != y")
    rows = test.class_indices(y)
    if rows.size == 0:
        raise ValueError(f"no test points with label {y}")
    s = decision_scores(predictor, test.X[rows])
    return float(np.mean(s[:, k] > s[:, y]))


def sandwich_check(report: ErrorReport) -> tuple[bool, bool]:
    """Verify max_k pairwise <= worst-class <= c * max_k pairwise.

    Both bounds hold exactly on counted scores (up to argmax tie breaking,
    which is measure-zero for continuous scores).
    """
    off = report.pairwise.copy()
    np.fill_diagonal(off, 0.0)
    top = float(off.max())
    eps = 1e-12
    lower = top <= report.worst_class_error + eps
    upper = report.worst_class_error <= report.c * top + eps
    return lower, upper


def merge_reports(reports: list[ErrorReport]) -> ErrorReport:
    """Combine shard reports by summing counts (test-set sharding)."""
    if not reports:
        raise ValueError("no reports to merge")
    c = reports[0].c
    confusion = sum((r.confusion for r in reports), np.zeros((c, c), dtype=np.int64))
    counts = confusion.sum(axis=1)
    weights = np.array([r.confusion.sum(axis=1) for r in reports])  # shard x class
    pairwise = np.zeros((c, c))
    for r, w in zip(reports, weights):
        pairwise += r.pairwise * w[:, None]
    pairwise /= counts[:, None]
    per_class = 1.0 - np.diag(confusion) / counts
    return ErrorReport(
        per_class_error=per_class,
        worst_class_error=float(per_class.max()),
        balanced_error=float(per_class.mean()),
        macro_f1=_macro_f1(confusion),
        confusion=confusion,
        pairwise=pairwise,
    )


def save_confusion_csv(report: ErrorReport, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["true\\pred"] + [str(k + 1) for k in range(report.c)])
        for y in range(report.c):
            writer.writerow([str(y + 1)] + [int(v) for v in report.confusion[y]])
