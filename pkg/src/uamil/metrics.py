"""Binary classification metrics and the confidence/accuracy curve."""

from __future__ import annotations

from fractions import Fraction
from dataclasses import dataclass

import numpy as np

from .errors import MetricError, ShapeError

DEFAULT_PERCENTILES = tuple(range(0, 100, 10))


def _arrays(scores, labels):
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).astype(int).reshape(-1)
    if s.shape != y.shape:
        raise ShapeError("scores and labels differ in length")
    if np.any((y != 0) & (y != 1)):
        raise MetricError("labels must be 0 or 1")
    return s, y


def confusion(scores, labels, threshold: float = 0.5) -> tuple[int, int, int, int]:
    """``(tp, fp, fn, tn)`` with predictions ``score >= threshold``."""
    s, y = _arrays(scores, labels)
    pred = s >= threshold
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    return tp, fp, fn, int(y.size - tp - fp - fn)


def f_score(scores, labels, threshold: float = 0.5) -> float:
    """F1; 0 when precision + recall is 0."""
    s, _ = _arrays(scores, labels)
    if s.size == 0:
        raise MetricError("f_score of an empty set")
    tp, fp, fn, _ = confusion(scores, labels, threshold)
    # 2PR/(P+R) reduces to 2TP/(2TP+FP+FN)
    return 0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn)


def recall(scores, labels, threshold: float = 0.5) -> float:
    tp, _, fn, _ = confusion(scores, labels, threshold)
    if tp + fn == 0:
        raise MetricError("recall undefined without positives")
    return tp / (tp + fn)


def accuracy(scores, labels, threshold: float = 0.5) -> float:
    tp, fp, fn, tn = confusion(scores, labels, threshold)
    n = tp + fp + fn + tn
    if n == 0:
        raise MetricError("accuracy of an empty set")
    return (tp + tn) / n


def auc_roc(scores, labels) -> float:
    """Mann-Whitney statistic with half credit for ties, computed exactly."""
    s, y = _arrays(scores, labels)
    pos, neg = s[y == 1], s[y == 0]
    if pos.size == 0 or neg.size == 0:
        raise MetricError("auc_roc needs both classes")
    neg_sorted = np.sort(neg)
    below = np.searchsorted(neg_sorted, pos, side="left")
    not_above = np.searchsorted(neg_sorted, pos, side="right")
    # doubled counts keep the numerator integral
    twice = int(np.sum(below)) * 2 + int(np.sum(not_above - below))
    return twice / (2 * pos.size * neg.size)


def average_precision(scores, labels) -> float:
    """Step-function AP over descending scores; ties keep input order."""
    s, y = _arrays(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise MetricError("average_precision needs at least one positive")
    order = np.argsort(-s, kind="stable")
    ranked = y[order]
    tp = np.cumsum(ranked)
    ranks = np.arange(1, s.size + 1)
    hit = ranked == 1
    # exact rational sum, rounded once
    total = sum((Fraction(int(t), int(k)) for t, k in zip(tp[hit], ranks[hit])), Fraction(0))
    return float(total / n_pos)


@dataclass
class CalibrationRow:
    percentile: float
    threshold: float
    accuracy: float | None
    coverage: float


def calibration_curve(scores, labels, confidences,
                      percentiles=DEFAULT_PERCENTILES,
                      decision_threshold: float = 0.5) -> list[CalibrationRow]:
    """Accuracy of the predictions whose confidence is at least each percentile."""
    s, y = _arrays(scores, labels)
    c = np.asarray(confidences, dtype=np.float64).reshape(-1)
    if c.shape != s.shape:
        raise ShapeError("confidences and scores differ in length")
    if s.size == 0:
        raise MetricError("calibration curve of an empty set")
    correct = (s >= decision_threshold).astype(int) == y
    rows = []
    for p in percentiles:
        thr = float(np.percentile(c, p))
        keep = c >= thr
        n = int(keep.sum())
        acc = float(correct[keep].mean()) if n else None
        rows.append(CalibrationRow(float(p), thr, acc, n / s.size))
    return rows
