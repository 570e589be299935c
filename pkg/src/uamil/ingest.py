"""AIS CSV parsing, bag construction and the synthetic planted-shapelet data."""

from __future__ import annotations

import csv
import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field, asdict
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import ConfigError, DataError, SchemaError
from .rng import make_rng, stable_hash
from .series import (AIS_CHANNELS, KINEMATIC_CHANNELS, Bag, MultivariateSeries,
                     derive_kinematics, segment)

REQUIRED_COLUMNS = ("MMSI", "BaseDateTime", "LAT", "LON", "SOG", "COG", "VesselType")


@dataclass(frozen=True)
class AisRecord:
    mmsi: str
    timestamp: float
    lat: float
    lon: float
    sog: float
    cog: float
    vessel_type: int | None = None


@dataclass
class RejectReport:
    total_rows: int = 0
    accepted: int = 0
    reasons: Counter = field(default_factory=Counter)
    # rows seen / rejected per MMSI, for the missing-value vessel filter
    rows_by_mmsi: Counter = field(default_factory=Counter)
    rejects_by_mmsi: Counter = field(default_factory=Counter)

    @property
    def rejected(self) -> int:
        return sum(self.reasons.values())

    def reject(self, reason: str, mmsi: str | None = None):
        self.reasons[reason] += 1
        if mmsi is not None:
            self.rejects_by_mmsi[mmsi] += 1

    def summary(self) -> str:
        lines = [f"rows={self.total_rows} accepted={self.accepted} rejected={self.rejected}"]
        lines += [f"  {reason}: {n}" for reason, n in sorted(self.reasons.items())]
        return "\n".join(lines)


@dataclass(frozen=True)
class TaskSpec:
    name: str
    positive_type_codes: frozenset[int]

    def __post_init__(self):
        if self.name not in ("fishing", "cargo", "tanker", "custom"):
            raise ConfigError(f"unknown task {self.name!r}")
        if not self.positive_type_codes:
            raise ConfigError("positive_type_codes must be non-empty")

    @classmethod
    def preset(cls, name: str) -> "TaskSpec":
        try:
            codes = TASK_PRESETS[name]
        except KeyError:
            raise ConfigError(f"no preset for task {name!r}") from None
        return cls(name, frozenset(codes))

    def label(self, vessel_type: int) -> int:
        return int(vessel_type in self.positive_type_codes)


# AIS vessel-type code ranges
TASK_PRESETS = {
    "fishing": (30,),
    "cargo": tuple(range(70, 80)),
    "tanker": tuple(range(80, 90)),
}


def parse_timestamp(text: str) -> float:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def _finite(text: str) -> float:
    v = float(text)
    if not math.isfinite(v):
        raise ValueError(text)
    return v


def iter_ais_csv(path, report: RejectReport) -> Iterator[AisRecord]:
    """Yield well-formed records in file order, tallying rejects in ``report``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file, header row required") from None
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing required columns: {', '.join(missing)}")
        idx = {c: header.index(c) for c in REQUIRED_COLUMNS}
        for row in reader:
            if not row:
                continue
            report.total_rows += 1
            if len(row) != len(header):
                report.reject("wrong arity")
                continue
            mmsi = row[idx["MMSI"]].strip()
            if not (len(mmsi) == 9 and mmsi.isdigit()):
                report.reject("bad mmsi")
                continue
            report.rows_by_mmsi[mmsi] += 1
            try:
                ts = parse_timestamp(row[idx["BaseDateTime"]])
            except ValueError:
                report.reject("bad timestamp", mmsi)
                continue
            try:
                lat = _finite(row[idx["LAT"]])
                lon = _finite(row[idx["LON"]])
                sog = _finite(row[idx["SOG"]])
                cog = _finite(row[idx["COG"]])
                vt_text = row[idx["VesselType"]].strip()
                vessel_type = int(float(vt_text)) if vt_text else None
            except ValueError:
                report.reject("unparseable number", mmsi)
                continue
            if not -90.0 <= lat <= 90.0:
                report.reject("lat out of range", mmsi)
            elif not -180.0 <= lon <= 180.0:
                report.reject("lon out of range", mmsi)
            elif sog < 0:
                report.reject("sog negative", mmsi)
            elif not 0.0 <= cog < 360.0:
                report.reject("cog out of range", mmsi)
            else:
                report.accepted += 1
                yield AisRecord(mmsi, ts, lat, lon, sog, cog, vessel_type)


def parse_ais_csv(path) -> tuple[list[AisRecord], RejectReport]:
    report = RejectReport()
    records = list(iter_ais_csv(path, report))
    return records, report


def _vessel_type(recs: Sequence[AisRecord]) -> int | None:
    counts = Counter(r.vessel_type for r in recs if r.vessel_type is not None)
    if not counts:
        return None
    best = max(counts.values())
    return min(code for code, n in counts.items() if n == best)


def build_series(records: Iterable[AisRecord]) -> dict[str, tuple[MultivariateSeries, int | None]]:
    """Group by MMSI, sort by time, drop repeated timestamps (keep first)."""
    groups: dict[str, list[AisRecord]] = defaultdict(list)
    for r in records:
        groups[r.mmsi].append(r)
    out = {}
    for mmsi in sorted(groups):
        recs = groups[mmsi]
        # stable sort keeps file order among equal timestamps
        recs.sort(key=lambda r: r.timestamp)
        kept, last = [], None
        for r in recs:
            if r.timestamp != last:
                kept.append(r)
                last = r.timestamp
        values = np.array([[r.lat for r in kept], [r.lon for r in kept],
                           [r.sog for r in kept], [r.cog for r in kept]])
        ts = np.array([r.timestamp for r in kept])
        out[mmsi] = (MultivariateSeries(mmsi, ts, values, AIS_CHANNELS), _vessel_type(kept))
    return out


def build_bags(records: Iterable[AisRecord], task: TaskSpec, min_len: int = 100,
               window_len: int = 100, reject_report: RejectReport | None = None,
               max_reject_fraction: float = 0.1) -> list[Bag]:
    """Turn AIS records into labeled bags, one per vessel, sorted by MMSI.

    Vessels with fewer than ``min_len`` distinct timestamps (or fewer than one
    window), no vessel type, or more than ``max_reject_fraction`` of their
    rows rejected at parse time are dropped.
    """
    bags = []
    for mmsi, (series, vtype) in build_series(records).items():
        if vtype is None:
            continue
        if reject_report is not None:
            seen = reject_report.rows_by_mmsi.get(mmsi, 0)
            if seen and reject_report.rejects_by_mmsi.get(mmsi, 0) / seen > max_reject_fraction:
                continue
        if series.length < max(min_len, window_len):
            continue
        bags.append(segment(derive_kinematics(series), window_len, label=task.label(vtype)))
    return bags


@dataclass
class SyntheticConfig:
    n_pos_bags: int = 200
    n_neg_bags: int = 200
    series_len_range: tuple[int, int] = (100, 200)
    window_len: int = 25
    shapelet_len: int = 50
    cruise_speed_mean: float = 12.0
    cruise_speed_std: float = 1.0
    cruise_heading_drift_std: float = 2.0
    loiter_speed_mean: float = 1.0
    loiter_speed_std: float = 0.5
    loiter_heading_drift_std: float = 45.0
    noise_std: float = 0.5
    sample_interval: float = 60.0
    seed: int = 0

    def validate(self):
        t_min, t_max = self.series_len_range
        if self.n_pos_bags < 0 or self.n_neg_bags < 0:
            raise ConfigError("bag counts must be non-negative")
        if self.window_len < 2:
            raise ConfigError("window_len must be at least 2")
        if t_min > t_max:
            raise ConfigError("series_len_range must be ordered")
        if t_min < self.window_len:
            raise ConfigError("minimum series length is shorter than one window")
        if self.shapelet_len < self.window_len or self.shapelet_len % self.window_len:
            raise ConfigError("shapelet_len must be a positive multiple of window_len")
        if self.shapelet_len > t_min:
            raise ConfigError(
                f"shapelet_len {self.shapelet_len} exceeds minimum series length {t_min}")

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown synthetic config fields: {sorted(unknown)}")
        d = dict(d)
        if "series_len_range" in d:
            d["series_len_range"] = tuple(d["series_len_range"])
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["series_len_range"] = list(self.series_len_range)
        return d


def _simulate_track(rng: np.random.Generator, cfg: SyntheticConfig, T: int,
                    loiter: np.ndarray) -> np.ndarray:
    """Random-walk AIS track, shape (4, T) as [lat, lon, sog, cog]."""
    lat = rng.uniform(20.0, 50.0)
    lon = rng.uniform(-130.0, -60.0)
    heading = rng.uniform(0.0, 360.0)
    speed_mu = np.where(loiter, cfg.loiter_speed_mean, cfg.cruise_speed_mean)
    speed_sd = np.where(loiter, cfg.loiter_speed_std, cfg.cruise_speed_std)
    drift_sd = np.where(loiter, cfg.loiter_heading_drift_std, cfg.cruise_heading_drift_std)
    speed = np.maximum(0.0, speed_mu + speed_sd * rng.standard_normal(T))
    headings = (heading + np.cumsum(drift_sd * rng.standard_normal(T))) % 360.0
    noise = rng.standard_normal((2, T)) * cfg.noise_std
    out = np.empty((4, T))
    hours = cfg.sample_interval / 3600.0
    for t in range(T):
        out[0, t], out[1, t] = lat, lon
        dist = speed[t] * hours / 60.0  # degrees of arc
        rad = math.radians(headings[t])
        lat = min(89.0, max(-89.0, lat + dist * math.cos(rad)))
        lon += dist * math.sin(rad) / max(0.05, math.cos(math.radians(lat)))
        lon = (lon + 180.0) % 360.0 - 180.0
    out[2] = np.maximum(0.0, speed + noise[0])
    out[3] = (headings + noise[1]) % 360.0
    return out


def generate_synthetic(config: SyntheticConfig) -> list[Bag]:
    """Planted-shapelet bags with known instance labels.

    Negative bags are cruise-regime tracks. Positive bags carry one contiguous
    loiter segment of ``shapelet_len`` steps at a window-aligned offset; the
    windows it covers are the true positive instances.
    """
    config.validate()
    rng = make_rng(config.seed)
    W = config.window_len
    labels = np.array([1] * config.n_pos_bags + [0] * config.n_neg_bags)
    labels = labels[rng.permutation(labels.size)]
    t_min, t_max = config.series_len_range
    width = config.shapelet_len // W
    bags = []
    for i, label in enumerate(labels):
        T = int(rng.integers(t_min, t_max + 1))
        n_windows = T // W
        loiter = np.zeros(T, dtype=bool)
        true_labels = [0] * n_windows
        if label:
            start = int(rng.integers(0, n_windows - width + 1))
            loiter[start * W:(start + width) * W] = True
            for j in range(start, start + width):
                true_labels[j] = 1
        track = _simulate_track(rng, config, T, loiter)
        ts = np.arange(T, dtype=np.float64) * config.sample_interval
        series = MultivariateSeries(f"syn{i:06d}", ts, track, AIS_CHANNELS)
        bags.append(segment(derive_kinematics(series), W, label=int(label),
                            true_labels=true_labels))
    return bags


@dataclass(frozen=True)
class FeatureRecord:
    """One entity's second-modality feature vector."""
    entity_id: str
    features: np.ndarray
    label: int


def generate_modality_pair(bags: Sequence[Bag], feature_dim: int = 16,
                           signal_strength: float = 1.0, noise_std: float = 1.0,
                           seed: int = 0, missing_fraction: float = 0.0) -> list[FeatureRecord]:
    """Second-modality stand-in: ``(2y - 1) * s * u + noise`` per entity."""
    if not 0.0 <= missing_fraction <= 1.0:
        raise ConfigError("missing_fraction must lie in [0, 1]")
    rng = make_rng(seed)
    direction = rng.standard_normal(feature_dim)
    direction /= np.linalg.norm(direction)
    n = len(bags)
    n_missing = int(round(missing_fraction * n))
    dropped = set(rng.choice(n, size=n_missing, replace=False).tolist()) if n_missing else set()
    noise = rng.standard_normal((n, feature_dim)) * noise_std
    out = []
    for i, bag in enumerate(bags):
        if i in dropped:
            continue
        x = (2 * bag.label - 1) * signal_strength * direction + noise[i]
        out.append(FeatureRecord(bag.entity_id, x, bag.label))
    return out


def is_test_entity(entity_id: str, test_fraction: float = 0.3) -> bool:
    return stable_hash(entity_id) / 2.0 ** 64 < test_fraction


def split(items: Sequence, test_fraction: float = 0.3, key=lambda x: x.entity_id):
    """Deterministic hash split into ``(train, test)``."""
    train, test = [], []
    for it in items:
        (test if is_test_entity(key(it), test_fraction) else train).append(it)
    return train, test


# -- file formats -----------------------------------------------------------

def _bag_to_json(bag: Bag) -> dict:
    return {"entity_id": bag.entity_id,
            "label": bag.label,
            "windows": bag.windows.tolist(),
            "true_instance_labels": bag.true_labels}


def write_bag_file(bags: Iterable[Bag], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for bag in bags:
            fh.write(json.dumps(_bag_to_json(bag), separators=(",", ":")) + "\n")


def _read_jsonl(path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None


def read_bag_file(path) -> list[Bag]:
    bags = []
    for obj in _read_jsonl(path):
        try:
            bags.append(Bag.from_windows(str(obj["entity_id"]), int(obj["label"]),
                                         obj["windows"], obj.get("true_instance_labels")))
        except KeyError as exc:
            raise SchemaError(f"{path}: bag record missing field {exc}") from None
    return bags


def write_feature_file(records: Iterable[FeatureRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            obj = {"entity_id": r.entity_id, "label": r.label,
                   "features": [float(v) for v in r.features]}
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")


def read_feature_file(path) -> list[FeatureRecord]:
    out = []
    for obj in _read_jsonl(path):
        try:
            out.append(FeatureRecord(str(obj["entity_id"]),
                                     np.asarray(obj["features"], dtype=np.float64),
                                     int(obj["label"])))
        except KeyError as exc:
            raise SchemaError(f"{path}: feature record missing field {exc}") from None
    return out


def sniff_data_kind(path) -> str:
    """``"bags"`` or ``"features"`` depending on the first record."""
    for obj in _read_jsonl(path):
        if "windows" in obj:
            return "bags"
        if "features" in obj:
            return "features"
        break
    raise DataError(f"{path}: neither a bag file nor a feature file")


def read_labels(path) -> dict[str, int]:
    return {str(obj["entity_id"]): int(obj["label"]) for obj in _read_jsonl(path)}
