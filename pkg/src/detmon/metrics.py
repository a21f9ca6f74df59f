"""Ordinal error metrics and alert-detection ROC metrics.

ROC curves use achievable-point semantics: one operating point per distinct
score threshold (ties grouped), plus the (0,0) and (1,1) endpoints, and no
interpolation between points. This keeps reported operating numbers
reproducible bit-for-bit from discrete classifier sweeps.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


def ordinal_errors(
    preds: Sequence[int], labels: Sequence[int]
) -> tuple[float, float, float]:
    """(MAE, RMSE, ZOE) between predicted and true ordinal classes."""
    if len(preds) != len(labels):
        raise ValueError(f"{len(preds)} predictions vs {len(labels)} labels")
    if not preds:
        raise ValueError("need at least one prediction")
    p = np.asarray(preds, dtype=np.float64)
    l = np.asarray(labels, dtype=np.float64)
    diff = p - l
    mae = float(np.mean(np.abs(diff)))
    rmse = float(np.sqrt(np.mean(diff**2)))
    zoe = float(np.mean(p != l))
    return mae, rmse, zoe


def roc_curve(scores: Sequence[float], labels: Sequence[bool]) -> np.ndarray:
    """Operating points (fpr, tpr) from sweeping every distinct score.

    A sample is called positive when its score is >= the threshold; tied
    scores enter together. Returns an (n, 2) array sorted by fpr then tpr,
    starting at (0, 0) and ending at (1, 1).
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be equal-length vectors")
    n_pos = int(labels.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs at least one positive and one negative label")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    tp = np.cumsum(sorted_labels)
    fp = np.cumsum(~sorted_labels)
    distinct = np.nonzero(np.diff(sorted_scores, append=-np.inf))[0]  # last index of each tie group
    points = np.column_stack([fp[distinct] / n_neg, tp[distinct] / n_pos])
    points = np.vstack([[0.0, 0.0], points])
    return points


def auroc(roc_points: np.ndarray) -> float:
    """Trapezoidal area under the curve.

    Equals the tie-aware pairwise statistic P(score_pos > score_neg)
    + 0.5 P(score_pos = score_neg).
    """
    pts = np.asarray(roc_points, dtype=np.float64)
    x = pts[:, 0]
    y = pts[:, 1]
    return float(np.sum(np.diff(x) * (y[1:] + y[:-1]) / 2.0))


def tpr_at_fpr(roc_points: np.ndarray, fpr_cap: float = 0.05) -> float:
    """Best achievable TPR among points with FPR <= cap (0 if none)."""
    pts = np.asarray(roc_points, dtype=np.float64)
    eligible = pts[pts[:, 0] <= fpr_cap]
    if eligible.size == 0:
        return 0.0
    return float(eligible[:, 1].max())


def fpr_at_tpr(roc_points: np.ndarray, tpr_floor: float = 0.95) -> float:
    """Lowest achievable FPR among points with TPR >= floor (1 if none)."""
    pts = np.asarray(roc_points, dtype=np.float64)
    eligible = pts[pts[:, 1] >= tpr_floor]
    if eligible.size == 0:
        return 1.0
    return float(eligible[:, 0].min())


@dataclass
class EvalReport:
    """Everything a monitoring run reports for one evaluated stream."""

    mae: float
    rmse: float
    zoe: float
    roc_points: np.ndarray
    auroc: float
    tpr_at_fpr5: float
    fpr_at_tpr95: float
    windows: int
    positives: int
    negatives: int

    def as_table(self) -> list[tuple[str, float]]:
        return [
            ("MAE", self.mae),
            ("RMSE", self.rmse),
            ("ZOE", self.zoe),
            ("AUROC", self.auroc),
            ("TPR@FPR5", self.tpr_at_fpr5),
            ("FPR@TPR95", self.fpr_at_tpr95),
        ]

    def to_text(self, name: str = "monitor") -> str:
        lines = [
            f"report for {name}: {self.windows} windows "
            f"({self.positives} alert, {self.negatives} normal)"
        ]
        lines += [f"  {metric:<10} {value:.4f}" for metric, value in self.as_table()]
        return "\n".join(lines)

    def to_csv_row(self) -> str:
        return ",".join(f"{value:.6f}" for _, value in self.as_table())


def build_report(
    pred_classes: Sequence[int],
    true_classes: Sequence[int],
    alert_scores: Sequence[float],
    alert_labels: Sequence[bool],
) -> EvalReport:
    """Assemble the full report from per-window predictions and labels."""
    mae, rmse, zoe = ordinal_errors(pred_classes, true_classes)
    points = roc_curve(alert_scores, alert_labels)
    labels = np.asarray(alert_labels, dtype=bool)
    return EvalReport(
        mae=mae,
        rmse=rmse,
        zoe=zoe,
        roc_points=points,
        auroc=auroc(points),
        tpr_at_fpr5=tpr_at_fpr(points),
        fpr_at_tpr95=fpr_at_tpr(points),
        windows=len(pred_classes),
        positives=int(labels.sum()),
        negatives=int((~labels).sum()),
    )


def side_by_side(reports: dict[str, EvalReport]) -> str:
    """Plain-text comparison table, one column per system."""
    names = list(reports)
    width = max(10, *(len(n) for n in names)) + 2
    header = f"{'metric':<12}" + "".join(f"{n:>{width}}" for n in names)
    lines = [header]
    for row, _ in next(iter(reports.values())).as_table():
        values = []
        for n in names:
            value = dict(reports[n].as_table())[row]
            values.append(f"{value:>{width}.4f}")
        lines.append(f"{row:<12}" + "".join(values))
    return "\n".join(lines)
