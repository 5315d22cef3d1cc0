"""Confusion tables, P/R/F1 (binary, per class, micro and macro) and ROC AUC.

Any ratio whose denominator is zero is reported as 0.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import rankdata


class MetricsError(ValueError):
    pass


def _ratio(num: float, den: float) -> float:
    return float(num) / float(den) if den else 0.0


def confusion(true_labels: Sequence[int], pred_labels: Sequence[int], K: int) -> np.ndarray:
    """K x K counts, rows = true class, columns = predicted class."""
    t = np.asarray(true_labels, dtype=np.int64)
    p = np.asarray(pred_labels, dtype=np.int64)
    if t.shape != p.shape:
        raise MetricsError(f"length mismatch: {len(t)} true vs {len(p)} predicted labels")
    if t.size and (min(t.min(), p.min()) < 0 or max(t.max(), p.max()) >= K):
        raise MetricsError(f"labels must lie in [0, {K})")
    table = np.zeros((K, K), dtype=np.int64)
    np.add.at(table, (t, p), 1)
    return table


def binary_metrics(table: np.ndarray, positive: int = 0) -> tuple[float, float, float, float]:
    """(accuracy, precision, recall, f1) of a 2 x 2 table for one positive class."""
    table = np.asarray(table)
    if table.shape != (2, 2):
        raise MetricsError("binary_metrics needs a 2x2 table")
    neg = 1 - positive
    tp = table[positive, positive]
    fp = table[neg, positive]
    fn = table[positive, neg]
    total = table.sum()
    accuracy = _ratio(np.trace(table), total)
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    f1 = _ratio(2 * tp, 2 * tp + fp + fn)
    return accuracy, precision, recall, f1


def per_class(table: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One-vs-rest precision, recall and F1 for every class."""
    table = np.asarray(table)
    tp = np.diag(table).astype(float)
    col = table.sum(axis=0)
    row = table.sum(axis=1)
    fp = col - tp
    fn = row - tp
    k = len(tp)
    precision = np.array([_ratio(tp[i], col[i]) for i in range(k)])
    recall = np.array([_ratio(tp[i], row[i]) for i in range(k)])
    f1 = np.array([_ratio(2 * tp[i], 2 * tp[i] + fp[i] + fn[i]) for i in range(k)])
    return precision, recall, f1


@dataclass
class MetricsReport:
    accuracy: float
    precision: list[float]
    recall: list[float]
    f1: list[float]
    ma_pre: float
    ma_rec: float
    ma_f1: float
    mi_f1: float
    labels: list[str] = field(default_factory=list)
    confusion: list[list[int]] = field(default_factory=list)
    # filled for two-way reports only
    binary: dict | None = None
    auc: float | None = None

    def to_json(self) -> dict:
        out = {
            "accuracy": self.accuracy,
            "ma_pre": self.ma_pre,
            "ma_rec": self.ma_rec,
            "mi_f1": self.mi_f1,
            "ma_f1": self.ma_f1,
            "per_class": {
                name: {"precision": p, "recall": r, "f1": f}
                for name, p, r, f in zip(self.labels, self.precision, self.recall, self.f1)
            },
            "confusion": self.confusion,
        }
        if self.binary is not None:
            out.update(self.binary)
            out["auc"] = self.auc
        return out

    def metric(self, name: str) -> float:
        if name == "accuracy":
            return self.accuracy
        if name == "macro_f1":
            return self.ma_f1
        raise MetricsError(f"unknown selection metric {name!r}")


def macro_micro(table: np.ndarray, labels: Sequence[str] | None = None) -> MetricsReport:
    table = np.asarray(table)
    k = table.shape[0]
    if table.shape != (k, k) or k < 2:
        raise MetricsError("need a square table with K >= 2")
    precision, recall, f1 = per_class(table)
    tp = int(np.trace(table))
    total = int(table.sum())
    # single-label: pooled FP and FN both equal total - tp
    fp = fn = total - tp
    return MetricsReport(
        accuracy=_ratio(tp, total),
        precision=precision.tolist(),
        recall=recall.tolist(),
        f1=f1.tolist(),
        ma_pre=float(precision.mean()),
        ma_rec=float(recall.mean()),
        ma_f1=float(f1.mean()),
        mi_f1=_ratio(2 * tp, 2 * tp + fp + fn),
        labels=list(labels) if labels is not None else [str(i) for i in range(k)],
        confusion=table.tolist(),
    )


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Mann-Whitney AUC with average ranks for tied scores."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape:
        raise MetricsError("scores and labels differ in length")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricsError("AUC undefined: only one class present")
    ranks = rankdata(s)  # average ranks, 1-based
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def two_way_report(
    true_labels: Sequence[int],
    pred_labels: Sequence[int],
    positive_scores: Sequence[float],
    positive: int = 0,
    labels: Sequence[str] = ("Q", "NQ"),
) -> MetricsReport:
    """Full two-way report; AUC is None (with a warning) if only one class is present."""
    table = confusion(true_labels, pred_labels, 2)
    report = macro_micro(table, labels)
    acc, p, r, f = binary_metrics(table, positive)
    report.binary = {"precision": p, "recall": r, "f1": f}
    y = (np.asarray(true_labels) == positive).astype(int)
    try:
        report.auc = roc_auc(positive_scores, y)
    except MetricsError:
        warnings.warn("AUC undefined: evaluation set has a single class", stacklevel=2)
        report.auc = None
    return report


def multi_way_report(
    true_labels: Sequence[int], pred_labels: Sequence[int], labels: Sequence[str]
) -> MetricsReport:
    return macro_micro(confusion(true_labels, pred_labels, len(labels)), labels)
