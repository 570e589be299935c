"""Instance batches, confidence-based attention and bag aggregation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import AggregationError, AttentionError, SamplingError, ShapeError
from .series import Bag, Instance


def instance_pool(bags: Sequence[Bag]) -> tuple[list[Instance], list[Instance]]:
    """Split every instance into (pseudo-negative, pseudo-positive) lists."""
    neg, pos = [], []
    for bag in bags:
        (pos if bag.label else neg).extend(bag.instances)
    return neg, pos


def sample_indices(n_neg_pool: int, n_pos_pool: int, rng: np.random.Generator,
                   n_neg: int = 200, n_pos: int = 400) -> tuple[np.ndarray, np.ndarray]:
    """Shuffled ``(class, pool_index)`` pairs drawn with replacement."""
    if n_neg and not n_neg_pool:
        raise SamplingError("no pseudo-negative instances to sample from")
    if n_pos and not n_pos_pool:
        raise SamplingError("no pseudo-positive instances to sample from")
    neg = rng.integers(0, n_neg_pool, size=n_neg) if n_neg else np.zeros(0, dtype=np.int64)
    pos = rng.integers(0, n_pos_pool, size=n_pos) if n_pos else np.zeros(0, dtype=np.int64)
    cls = np.concatenate([np.zeros(n_neg, dtype=np.int64), np.ones(n_pos, dtype=np.int64)])
    idx = np.concatenate([neg, pos])
    order = rng.permutation(cls.size)
    return cls[order], idx[order]


def sample_batch(bags: Sequence[Bag], rng: np.random.Generator, n_neg: int = 200,
                 n_pos: int = 400) -> list[Instance]:
    """Draw instances with replacement by pseudo class, then shuffle."""
    neg, pos = instance_pool(bags)
    cls, idx = sample_indices(len(neg), len(pos), rng, n_neg, n_pos)
    return [(pos if c else neg)[i] for c, i in zip(cls, idx)]


@dataclass
class AttentionBatch:
    pseudo_labels: np.ndarray
    predictions: np.ndarray
    confidences: np.ndarray
    attention: np.ndarray
    beta: float


def _median(values: np.ndarray) -> float:
    """Median; mean of the middle two for an even count.

    When the two middle values are adjacent floats their midpoint rounds onto
    the lower one; it is then nudged up one ulp so that value stays below.
    """
    v = np.sort(values)
    n = v.size
    if n % 2:
        return float(v[n // 2])
    lo, hi = float(v[n // 2 - 1]), float(v[n // 2])
    mid = lo + (hi - lo) / 2
    return math.nextafter(lo, math.inf) if lo < hi and mid <= lo else mid


def assign_attention(predictions, confidences, pseudo_labels,
                     median_scope: str = "positives") -> AttentionBatch:
    """Attention 1 for pseudo-negatives; for pseudo-positives, the score
    ``confidence * prediction`` if it reaches the batch median, else 0.

    ``median_scope`` picks the population for the median: the pseudo-positive
    scores (default) or every score in the batch.
    """
    y_bar = np.asarray(predictions, dtype=np.float64)
    c_hat = np.asarray(confidences, dtype=np.float64)
    labels = np.asarray(pseudo_labels).astype(int)
    if not (y_bar.shape == c_hat.shape == labels.shape) or y_bar.ndim != 1:
        raise ShapeError("predictions, confidences and labels must be equal-length vectors")
    score = c_hat * y_bar
    positive = labels == 1
    if not positive.any():
        raise AttentionError("batch has no pseudo-positive instances; threshold undefined")
    if median_scope == "positives":
        beta = _median(score[positive])
    elif median_scope == "all":
        beta = _median(score)
    else:
        raise ValueError(f"unknown median_scope {median_scope!r}")
    attention = np.where(positive, np.where(score >= beta, score, 0.0), 1.0)
    return AttentionBatch(labels, y_bar, c_hat, attention, beta)


def weighted_loss(batch: AttentionBatch | np.ndarray, per_instance_losses) -> float:
    a = batch.attention if isinstance(batch, AttentionBatch) else np.asarray(batch, dtype=float)
    losses = np.asarray(per_instance_losses, dtype=np.float64)
    if a.shape != losses.shape:
        raise ShapeError("attention and losses differ in length")
    return float(np.dot(a, losses) / a.size)


@dataclass
class BagPrediction:
    entity_id: str
    prediction: float
    confidence: float
    top_indices: list[int]


def default_top_k(n_instances: int) -> int:
    return max(1, math.ceil(n_instances / 10))


def aggregate_bag(predictions, confidences, k: int | None = None,
                  entity_id: str = "") -> BagPrediction:
    """Mean prediction and confidence over the top-``k`` instances by prediction.

    Ties go to the lower instance index.
    """
    y_bar = np.asarray(predictions, dtype=np.float64)
    c_hat = np.asarray(confidences, dtype=np.float64)
    if y_bar.size == 0:
        raise AggregationError(f"bag {entity_id!r} has no instances")
    if c_hat.shape != y_bar.shape:
        raise ShapeError("predictions and confidences differ in length")
    k = default_top_k(y_bar.size) if k is None else k
    if k < 1:
        raise ValueError("k must be at least 1")
    # lexsort: last key is primary -> descending prediction, then ascending index
    order = np.lexsort((np.arange(y_bar.size), -y_bar))[:min(k, y_bar.size)]
    top = [int(i) for i in order]
    return BagPrediction(entity_id, float(np.mean(y_bar[top])),
                         float(np.mean(c_hat[top])), top)
