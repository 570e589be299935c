"""Multivariate time-series model: kinematics, normalization, windowing."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import SchemaError, TooShortError, FitError

AIS_CHANNELS = ("lat", "lon", "sog", "cog")
KINEMATIC_CHANNELS = ("lat", "lon", "vx", "vy")


@dataclass(frozen=True)
class MultivariateSeries:
    """One entity's trajectory, stored as an ``M x T`` array."""

    entity_id: str
    timestamps: np.ndarray
    values: np.ndarray
    channel_names: tuple[str, ...]

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.float64)
        vals = np.atleast_2d(np.asarray(self.values, dtype=np.float64))
        names = tuple(self.channel_names)
        if vals.shape[0] != len(names):
            raise SchemaError(
                f"{len(names)} channel names for {vals.shape[0]} channels")
        if vals.shape[1] < 1:
            raise SchemaError("series must have at least one timestep")
        if ts.shape != (vals.shape[1],):
            raise SchemaError(
                f"timestamps length {ts.shape} != series length {vals.shape[1]}")
        if ts.size > 1 and np.any(np.diff(ts) <= 0):
            raise SchemaError("timestamps must be strictly increasing")
        if not np.all(np.isfinite(vals)):
            raise ValueError(f"non-finite values in series {self.entity_id!r}")
        ts.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "channel_names", names)

    @property
    def n_channels(self) -> int:
        return self.values.shape[0]

    @property
    def length(self) -> int:
        return self.values.shape[1]

    def channel(self, name: str) -> np.ndarray:
        try:
            return self.values[self.channel_names.index(name)]
        except ValueError:
            raise SchemaError(f"missing channel {name!r}") from None


@dataclass(frozen=True)
class Instance:
    bag_id: str
    index: int
    window: np.ndarray
    pseudo_label: int
    true_label: int | None = None


@dataclass(frozen=True)
class Bag:
    series_ref: str
    label: int
    instances: tuple[Instance, ...]

    @property
    def entity_id(self) -> str:
        return self.series_ref

    @property
    def windows(self) -> np.ndarray:
        """Stacked windows, shape ``(N, M, W)``."""
        return np.stack([inst.window for inst in self.instances])

    @property
    def true_labels(self) -> list[int] | None:
        labels = [inst.true_label for inst in self.instances]
        if any(lab is None for lab in labels):
            return None
        return labels

    @classmethod
    def from_windows(cls, entity_id: str, label: int, windows,
                     true_labels: Sequence[int] | None = None) -> "Bag":
        windows = np.asarray(windows, dtype=np.float64)
        if windows.ndim != 3 or windows.shape[0] < 1:
            raise SchemaError("windows must have shape (N, M, W) with N >= 1")
        if true_labels is not None and len(true_labels) != windows.shape[0]:
            raise SchemaError("true label count does not match window count")
        instances = []
        for i, win in enumerate(windows):
            win = win.copy()
            win.setflags(write=False)
            tl = None if true_labels is None else int(true_labels[i])
            instances.append(Instance(entity_id, i, win, int(label), tl))
        return cls(entity_id, int(label), tuple(instances))


@dataclass(frozen=True)
class Normalizer:
    channel_names: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.std) <= 0):
            raise FitError("normalizer std must be positive")

    def transform(self, values: np.ndarray) -> np.ndarray:
        """Standardize an array whose channel axis is ``-2``."""
        values = np.asarray(values, dtype=np.float64)
        return (values - self.mean[:, None]) / self.std[:, None]

    def to_dict(self) -> dict:
        return {"channel_names": list(self.channel_names),
                "mean": [float(v) for v in self.mean],
                "std": [float(v) for v in self.std]}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls(tuple(d["channel_names"]),
                   np.asarray(d["mean"], dtype=np.float64),
                   np.asarray(d["std"], dtype=np.float64))


def derive_kinematics(series: MultivariateSeries) -> MultivariateSeries:
    """Replace SOG/COG with eastward and northward velocity (knots).

    COG is in degrees clockwise from true north, so the eastward component
    uses the sine.
    """
    lat, lon = series.channel("lat"), series.channel("lon")
    sog, cog = series.channel("sog"), series.channel("cog")
    rad = np.deg2rad(cog)
    vx = sog * np.sin(rad)
    vy = sog * np.cos(rad)
    return MultivariateSeries(series.entity_id, series.timestamps,
                              np.stack([lat, lon, vx, vy]), KINEMATIC_CHANNELS)


def _fit_arrays(names: Sequence[str], columns: np.ndarray) -> Normalizer:
    # columns: (M, total_T)
    if columns.shape[1] < 2:
        raise FitError("need at least 2 timestamps per channel to fit")
    mean = columns.mean(axis=1)
    std = columns.std(axis=1)
    for name, s in zip(names, std):
        if not s > 0:
            raise FitError(f"channel {name!r} has zero variance")
    return Normalizer(tuple(names), mean, std)


def fit_normalizer(training_series: Iterable[MultivariateSeries]) -> Normalizer:
    """Per-channel population mean/std over all training timesteps."""
    series = list(training_series)
    if not series:
        raise FitError("no training series")
    names = series[0].channel_names
    for s in series[1:]:
        if s.channel_names != names:
            raise SchemaError("training series disagree on channel names")
    # sorting by id makes the summation order independent of input order
    series.sort(key=lambda s: s.entity_id)
    return _fit_arrays(names, np.concatenate([s.values for s in series], axis=1))


def fit_normalizer_windows(bags: Iterable[Bag], channel_names: Sequence[str]) -> Normalizer:
    """Fit on the columns covered by the bags' windows."""
    bags = sorted(bags, key=lambda b: b.entity_id)
    if not bags:
        raise FitError("no training bags")
    cols = np.concatenate(
        [np.concatenate(list(b.windows), axis=1) for b in bags], axis=1)
    return _fit_arrays(channel_names, cols)


def apply_normalizer(series: MultivariateSeries, normalizer: Normalizer) -> MultivariateSeries:
    if series.channel_names != normalizer.channel_names:
        raise SchemaError(
            f"channels {series.channel_names} do not match normalizer "
            f"{normalizer.channel_names}")
    return MultivariateSeries(series.entity_id, series.timestamps,
                              normalizer.transform(series.values),
                              series.channel_names)


def segment(series: MultivariateSeries, window_len: int, label: int = 0,
            true_labels: Sequence[int] | None = None) -> Bag:
    """Cut the series into ``floor(T / W)`` non-overlapping windows.

    A trailing remainder shorter than ``window_len`` is dropped.
    """
    if window_len < 1:
        raise ValueError("window_len must be positive")
    T = series.length
    if T < window_len:
        raise TooShortError(
            f"series {series.entity_id!r} has {T} steps, window is {window_len}")
    n = T // window_len
    windows = series.values[:, :n * window_len].reshape(
        series.n_channels, n, window_len).transpose(1, 0, 2)
    return Bag.from_windows(series.entity_id, label, windows, true_labels)
