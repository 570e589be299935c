"""Report figures. Everything renders off-screen to PNG files."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

DPI = 120
_METADATA = {"Software": None}   # keeps the PNG bytes version-independent


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI, metadata=_METADATA)
    plt.close(fig)
    return path


def figure_path(base, suffix: str) -> Path:
    """``report.json`` + ``calibration`` -> ``report_calibration.png``."""
    base = Path(base)
    return base.with_name(f"{base.stem}_{suffix}.png")


def plot_calibration(rows: Sequence[dict], path, title: str = "Accuracy above confidence threshold"):
    rows = [r for r in rows if r["accuracy"] is not None]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    pct = [r["percentile"] for r in rows]
    ax.plot(pct, [r["accuracy"] for r in rows], "o-", color="tab:blue", label="accuracy")
    ax.set_xlabel("confidence percentile threshold")
    ax.set_ylabel("accuracy")
    ax2 = ax.twinx()
    ax2.plot(pct, [r["coverage"] for r in rows], "s--", color="tab:gray", alpha=0.6,
             label="coverage")
    ax2.set_ylabel("retained fraction")
    ax2.set_ylim(0, 1.05)
    ax.set_title(title, fontsize=10)
    return _save(fig, path)


def roc_points(scores, labels):
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=int)
    thresholds = np.unique(s)[::-1]
    n_pos, n_neg = max(1, y.sum()), max(1, (1 - y).sum())
    fpr = [0.0] + [float(((s >= t) & (y == 0)).sum() / n_neg) for t in thresholds]
    tpr = [0.0] + [float(((s >= t) & (y == 1)).sum() / n_pos) for t in thresholds]
    return fpr, tpr


def plot_roc(scores, labels, path, auc: float | None = None):
    fpr, tpr = roc_points(scores, labels)
    fig, ax = plt.subplots(figsize=(4, 4))
    label = "model" if auc is None else f"AUC = {auc:.3f}"
    ax.plot(fpr, tpr, color="tab:blue", label=label)
    ax.plot([0, 1], [0, 1], ":", color="gray")
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.legend(loc="lower right", frameon=False)
    return _save(fig, path)


def plot_fusion_sweep(rows: Sequence[tuple[float, float]], adaptive_recall: float, path,
                      mean_lambda: float | None = None):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot([r[0] for r in rows], [r[1] for r in rows], "o-", color="tab:blue",
            label="fixed weight")
    label = "adaptive" if mean_lambda is None else f"adaptive (mean weight {mean_lambda:.2f})"
    ax.axhline(adaptive_recall, color="tab:red", label=label)
    ax.axvline(0.5, color="gray", ls=":")
    ax.set_xlabel("weight on modality A")
    ax.set_ylabel("recall")
    ax.legend(frameon=False, fontsize=8)
    return _save(fig, path)


def plot_lambda_hist(lambdas: Sequence[float], path, bins: int = 20):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.hist(lambdas, bins=bins, range=(0, 1), color="tab:blue", edgecolor="white")
    ax.set_xlabel("adaptive weight on modality A")
    ax.set_ylabel("entities")
    return _save(fig, path)
