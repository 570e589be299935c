"""Late fusion of two modality models' bag-level predictions."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, FusionError, JoinError, SchemaError

CONFIDENCE_FLOOR = 1e-6
FIXED_GRID = tuple(round(0.1 * i, 1) for i in range(11))


@dataclass(frozen=True)
class ModalityRecord:
    entity_id: str
    prediction: float
    confidence: float
    modality: str = "A"

    def __post_init__(self):
        if not 0.0 <= self.prediction <= 1.0:
            raise ValueError(f"prediction {self.prediction} outside [0, 1]")
        if not 0.0 < self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside (0, 1]")
        if self.modality not in ("A", "B"):
            raise ValueError(f"modality tag must be 'A' or 'B', got {self.modality!r}")


def adaptive_lambda(c_a: float, c_b: float) -> float:
    """Weight on modality A: ``c_a / (c_a + c_b)``."""
    if c_a <= 0 and c_b <= 0:
        raise FusionError("both confidences are zero; fusion weight undefined")
    c_a = max(c_a, CONFIDENCE_FLOOR)
    c_b = max(c_b, CONFIDENCE_FLOOR)
    return c_a / (c_a + c_b)


def fuse(rec_a: ModalityRecord, rec_b: ModalityRecord, lam: float) -> float:
    if rec_a.entity_id != rec_b.entity_id:
        raise JoinError(f"cannot fuse {rec_a.entity_id!r} with {rec_b.entity_id!r}")
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda {lam} outside [0, 1]")
    ya, yb = rec_a.prediction, rec_b.prediction
    if lam == 1.0:
        return ya
    if lam == 0.0:
        return yb
    # clip guards against rounding pushing the sum past either endpoint
    return min(max(lam * ya + (1.0 - lam) * yb, min(ya, yb)), max(ya, yb))


@dataclass(frozen=True)
class FusedRecord:
    entity_id: str
    prediction: float
    lam: float


def parse_mode(mode: str) -> float | None:
    """``"adaptive"`` -> None, ``"fixed:<lam>"`` -> lam."""
    if mode == "adaptive":
        return None
    if mode.startswith("fixed:"):
        try:
            lam = float(mode[len("fixed:"):])
        except ValueError:
            raise ValueError(f"bad fixed weight in mode {mode!r}") from None
        if not 0.0 <= lam <= 1.0:
            raise ValueError(f"fixed weight {lam} outside [0, 1]")
        return lam
    raise ValueError(f"unknown fusion mode {mode!r}")


def _index(records: Iterable[ModalityRecord], tag: str) -> dict[str, ModalityRecord]:
    out = {}
    for r in records:
        if r.entity_id in out:
            raise DataError(f"duplicate entity {r.entity_id!r} in modality {tag}")
        out[r.entity_id] = r
    return out


def fuse_dataset(records_a: Iterable[ModalityRecord], records_b: Iterable[ModalityRecord],
                 mode: str | float | None = "adaptive") -> list[FusedRecord]:
    """Join on entity id and fuse each pair.

    ``mode`` is ``"adaptive"``/None, a ``"fixed:<lam>"`` string or a float.
    Entities seen in one modality only keep that modality's prediction, with
    the weight recorded as 1 (A only) or 0 (B only).
    """
    lam_fixed = parse_mode(mode) if isinstance(mode, str) else mode
    a = _index(records_a, "A")
    b = _index(records_b, "B")
    out = []
    for eid in sorted(set(a) | set(b)):
        ra, rb = a.get(eid), b.get(eid)
        if rb is None:
            out.append(FusedRecord(eid, ra.prediction, 1.0))
        elif ra is None:
            out.append(FusedRecord(eid, rb.prediction, 0.0))
        else:
            lam = adaptive_lambda(ra.confidence, rb.confidence) if lam_fixed is None else lam_fixed
            out.append(FusedRecord(eid, fuse(ra, rb, lam), lam))
    return out


def recall(fused: Sequence[FusedRecord], labels: dict[str, int], threshold: float = 0.5,
           paired_only_ids: set[str] | None = None) -> float:
    hits = total = 0
    for r in fused:
        if paired_only_ids is not None and r.entity_id not in paired_only_ids:
            continue
        if labels.get(r.entity_id) == 1:
            total += 1
            hits += r.prediction >= threshold
    if total == 0:
        raise DataError("no positive entities to compute recall over")
    return hits / total


def fixed_lambda_sweep(records_a, records_b, labels: dict[str, int],
                       grid: Sequence[float] = FIXED_GRID, threshold: float = 0.5):
    """Recall over matched pairs for each fixed weight, plus the adaptive recall.

    Returns ``(rows, adaptive_recall, adaptive_lambdas)`` where rows are
    ``(lam, recall)``.
    """
    records_a, records_b = list(records_a), list(records_b)
    paired = {r.entity_id for r in records_a} & {r.entity_id for r in records_b}
    if not paired:
        raise DataError("no entities present in both modalities")
    rows = []
    for lam in grid:
        fused = fuse_dataset(records_a, records_b, float(lam))
        rows.append((float(lam), recall(fused, labels, threshold, paired)))
    adaptive = fuse_dataset(records_a, records_b, "adaptive")
    lams = [r.lam for r in adaptive if r.entity_id in paired]
    return rows, recall(adaptive, labels, threshold, paired), lams


# -- modality record CSV ------------------------------------------------------

MODALITY_HEADER = ("entity_id", "prediction", "confidence")


def write_modality_csv(records: Iterable[ModalityRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MODALITY_HEADER)
        for r in records:
            w.writerow([r.entity_id, repr(float(r.prediction)), repr(float(r.confidence))])


def read_modality_csv(path, modality: str = "A") -> list[ModalityRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in MODALITY_HEADER if c not in (reader.fieldnames or [])]
        if missing:
            raise SchemaError(f"{path}: missing columns {', '.join(missing)}")
        out = []
        for lineno, row in enumerate(reader, 2):
            try:
                out.append(ModalityRecord(row["entity_id"], float(row["prediction"]),
                                          float(row["confidence"]), modality))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
        return out


def write_fused_csv(records: Iterable[FusedRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("entity_id", "prediction", "lambda"))
        for r in records:
            w.writerow([r.entity_id, repr(float(r.prediction)), repr(float(r.lam))])
