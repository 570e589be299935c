"""Training, evaluation, prediction and checkpoint I/O."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import metrics
from .bayes_head import VariationalHead, elbo_loss, predict_mc_batch
from .encoder import EncoderParams, backward_batch, encode_batch
from .errors import (CheckpointError, ConfigError, SchemaError, TrainingError,
                     UnsupportedVersionError)
from .fusion import ModalityRecord
from .ingest import FeatureRecord
from .mil import aggregate_bag, assign_attention, instance_pool, sample_indices
from .optim import Adam
from .rng import derive_rng, from_state, get_state, make_rng
from .series import KINEMATIC_CHANNELS, Bag, Normalizer, fit_normalizer_windows

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


@dataclass
class TrainConfig:
    task: str = "custom"
    window_len: int | None = None     # None: taken from the data
    n_neg: int = 200
    n_pos: int = 400
    epochs: int = 60
    steps_per_epoch: int | None = None  # None: ceil(instances / batch size)
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    k: float = 2.0
    j_train: int = 10
    j_eval: int = 30
    prior_sigma: float = 1.0
    rho_init: float = -5.0
    feature_dim: int = 64
    top_k: int | None = None          # None: max(1, ceil(N / 10))
    median_scope: str = "positives"
    attention: bool = True
    seed: int = 0

    def validate(self):
        if self.n_neg < 0 or self.n_pos < 0 or self.n_neg + self.n_pos == 0:
            raise ConfigError("batch composition must be non-negative and non-empty")
        for name in ("epochs", "j_train", "feature_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.j_eval < 2:
            raise ConfigError("j_eval must be at least 2")
        if self.steps_per_epoch is not None and self.steps_per_epoch < 1:
            raise ConfigError("steps_per_epoch must be positive")
        if self.top_k is not None and self.top_k < 1:
            raise ConfigError("top_k must be positive")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.median_scope not in ("positives", "all"):
            raise ConfigError("median_scope must be 'positives' or 'all'")
        if self.prior_sigma <= 0 or self.k <= 0:
            raise ConfigError("prior_sigma and k must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)

    def head_kwargs(self) -> dict:
        return dict(prior_sigma=self.prior_sigma, k=self.k,
                    j_train=self.j_train, j_eval=self.j_eval)


@dataclass
class Checkpoint:
    config: TrainConfig
    model_kind: str                   # "mil" (trajectory bags) or "vector"
    head: VariationalHead
    normalizer: Normalizer
    encoder: EncoderParams | None
    rng_state: dict
    epoch: int = 0
    loss_history: list[float] = field(default_factory=list)
    version: int = FORMAT_VERSION

    def to_dict(self) -> dict:
        return {
            "format_version": self.version,
            "model_kind": self.model_kind,
            "config": self.config.to_dict(),
            "epoch": self.epoch,
            "loss_history": [float(v) for v in self.loss_history],
            "normalizer": self.normalizer.to_dict(),
            "encoder": None if self.encoder is None else self.encoder.to_dict(),
            "head": self.head.to_dict(),
            "rng_state": self.rng_state,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Checkpoint":
        version = d.get("format_version")
        if version != FORMAT_VERSION:
            raise UnsupportedVersionError(
                f"checkpoint format version {version!r} unsupported (expected {FORMAT_VERSION})")
        try:
            return cls(config=TrainConfig.from_dict(d["config"]),
                       model_kind=d["model_kind"],
                       head=VariationalHead.from_dict(d["head"]),
                       normalizer=Normalizer.from_dict(d["normalizer"]),
                       encoder=None if d["encoder"] is None else EncoderParams.from_dict(d["encoder"]),
                       rng_state=d["rng_state"], epoch=int(d["epoch"]),
                       loss_history=[float(v) for v in d["loss_history"]],
                       version=version)
        except KeyError as exc:
            raise CheckpointError(f"checkpoint missing field {exc}") from None


def dumps_checkpoint(ckpt: Checkpoint) -> str:
    return json.dumps(ckpt.to_dict(), separators=(",", ":"), allow_nan=False) + "\n"


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    Path(path).write_text(dumps_checkpoint(ckpt), encoding="utf-8")


def load_checkpoint(path) -> Checkpoint:
    text = Path(path).read_text(encoding="utf-8")
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: cannot parse checkpoint: {exc}") from None
    if not isinstance(d, dict):
        raise CheckpointError(f"{path}: checkpoint is not a JSON object")
    return Checkpoint.from_dict(d)


# -- training -----------------------------------------------------------------

def _param_views(encoder: EncoderParams | None, head: VariationalHead) -> dict[str, np.ndarray]:
    views = {}
    if encoder is not None:
        views.update({f"enc.{k}": v for k, v in encoder.arrays.items()})
    views.update({f"mu.{k}": v for k, v in head.mu.items()})
    views.update({f"rho.{k}": v for k, v in head.rho.items()})
    return views


def _check_both_classes(labels):
    labels = set(int(v) for v in labels)
    if labels != {0, 1}:
        raise TrainingError("training data must contain both classes")


def _window_len(bags: Sequence[Bag], config: TrainConfig) -> int:
    lens = {b.windows.shape[2] for b in bags}
    if len(lens) != 1:
        raise SchemaError(f"bags disagree on window length: {sorted(lens)}")
    W = lens.pop()
    if config.window_len is not None and config.window_len != W:
        raise SchemaError(f"data window length {W} != configured {config.window_len}")
    return W


def _run_steps(config: TrainConfig, rng, head, encoder, pools, dataset_size, step_fn_inputs,
               on_epoch=None):
    """Shared epoch/step loop. ``step_fn_inputs(cls, idx)`` -> (model input, labels)."""
    params = _param_views(encoder, head)
    opt = Adam(config.learning_rate, config.beta1, config.beta2, config.adam_eps)
    n_neg_pool, n_pos_pool = pools
    batch = config.n_neg + config.n_pos
    steps = config.steps_per_epoch or max(1, math.ceil(dataset_size / batch))
    history = []
    for epoch in range(config.epochs):
        losses = []
        for step in range(steps):
            cls, idx = sample_indices(n_neg_pool, n_pos_pool, rng, config.n_neg, config.n_pos)
            x, labels = step_fn_inputs(cls, idx)
            if encoder is not None:
                feats, cache = encode_batch(x, encoder)
            else:
                feats = x
            if config.attention:
                mean, conf, _ = predict_mc_batch(feats, head, rng, config.j_train)
                att = assign_attention(mean, conf, labels, config.median_scope).attention
            else:
                att = None
            res = elbo_loss(feats, labels, head, rng, config.j_train,
                            dataset_size=dataset_size, attention=att)
            B = labels.size
            loss = res.loss / B
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch + 1}, step {step + 1}")
            grads = {f"mu.{k}": g / B for k, g in res.grad_mu.items()}
            grads.update({f"rho.{k}": g / B for k, g in res.grad_rho.items()})
            if encoder is not None:
                enc_grads, _ = backward_batch(cache, res.grad_features / B, encoder)
                grads.update({f"enc.{k}": g for k, g in enc_grads.arrays.items()})
            opt.step(params, grads)
            losses.append(loss)
        history.append(float(np.mean(losses)))
        log.debug("epoch %d loss %.6f", epoch + 1, history[-1])
        if on_epoch is not None:
            on_epoch(epoch + 1, history)
    for name, arr in params.items():
        if not np.all(np.isfinite(arr)):
            raise TrainingError(f"parameter {name} became non-finite")
    return history


def train(config: TrainConfig, bags: Sequence[Bag],
          channel_names: Sequence[str] = KINEMATIC_CHANNELS, callback=None) -> Checkpoint:
    """Train encoder and variational head end to end on MIL bags.

    ``callback(checkpoint)``, if given, receives a snapshot after every epoch.
    """
    config.validate()
    bags = sorted(bags, key=lambda b: b.entity_id)
    if not bags:
        raise TrainingError("no training bags")
    _check_both_classes(b.label for b in bags)
    W = _window_len(bags, config)
    M = bags[0].windows.shape[1]
    if len(channel_names) != M:
        channel_names = tuple(f"c{i}" for i in range(M))
    normalizer = fit_normalizer_windows(bags, channel_names)
    neg, pos = instance_pool(bags)
    X = {0: normalizer.transform(np.stack([i.window for i in neg])) if neg else None,
         1: normalizer.transform(np.stack([i.window for i in pos])) if pos else None}

    rng = make_rng(config.seed)
    encoder = EncoderParams.init(M, rng, config.feature_dim)
    head = VariationalHead.init(config.feature_dim, rng, config.rho_init, **config.head_kwargs())

    def inputs(cls, idx):
        x = np.empty((cls.size, M, W))
        for c in (0, 1):
            sel = cls == c
            if sel.any():
                x[sel] = X[c][idx[sel]]
        return x, cls.astype(np.float64)

    def snapshot(epoch, history):
        callback(Checkpoint(config, "mil", head.copy(), normalizer, encoder.copy(),
                            get_state(rng), epoch, list(history)))

    history = _run_steps(config, rng, head, encoder, (len(neg), len(pos)),
                         len(neg) + len(pos), inputs, snapshot if callback else None)
    return Checkpoint(config, "mil", head, normalizer, encoder, get_state(rng),
                      config.epochs, history)


def _feature_normalizer(records: Sequence[FeatureRecord]) -> Normalizer:
    F = np.stack([r.features for r in records])
    std = F.std(axis=0)
    names = tuple(f"f{i}" for i in range(F.shape[1]))
    bad = [names[i] for i in np.flatnonzero(std <= 0)]
    if bad:
        raise TrainingError(f"feature dimensions with zero variance: {bad}")
    return Normalizer(names, F.mean(axis=0), std)


def train_vector(config: TrainConfig, records: Sequence[FeatureRecord]) -> Checkpoint:
    """Train a variational head directly on per-entity feature vectors."""
    config.validate()
    records = sorted(records, key=lambda r: r.entity_id)
    if not records:
        raise TrainingError("no training records")
    _check_both_classes(r.label for r in records)
    normalizer = _feature_normalizer(records)
    F = (np.stack([r.features for r in records]) - normalizer.mean) / normalizer.std
    y = np.array([r.label for r in records])
    pools = {c: F[y == c] for c in (0, 1)}

    rng = make_rng(config.seed)
    head = VariationalHead.init(F.shape[1], rng, config.rho_init, **config.head_kwargs())

    def inputs(cls, idx):
        x = np.empty((cls.size, F.shape[1]))
        for c in (0, 1):
            sel = cls == c
            if sel.any():
                x[sel] = pools[c][idx[sel]]
        return x, cls.astype(np.float64)

    history = _run_steps(config, rng, head, None, (len(pools[0]), len(pools[1])),
                         len(records), inputs)
    return Checkpoint(config, "vector", head, normalizer, None, get_state(rng),
                      config.epochs, history)


# -- inference ----------------------------------------------------------------

@dataclass
class BagResult:
    entity_id: str
    label: int
    prediction: float
    confidence: float
    top_indices: list[int]
    instance_predictions: list[float]
    instance_confidences: list[float]
    true_labels: list[int] | None = None


def predict_bags(ckpt: Checkpoint, bags: Sequence[Bag]) -> list[BagResult]:
    """Monte-Carlo bag predictions; each bag uses its own ``(seed, entity_id)`` stream."""
    if ckpt.model_kind != "mil":
        raise SchemaError("checkpoint is not a trajectory (MIL) model")
    out = []
    M = ckpt.encoder.n_channels
    for bag in sorted(bags, key=lambda b: b.entity_id):
        windows = bag.windows
        if windows.shape[1] != M or windows.shape[1] != len(ckpt.normalizer.channel_names):
            raise SchemaError(f"bag {bag.entity_id!r} has {windows.shape[1]} channels, "
                              f"model expects {M}")
        feats, _ = encode_batch(ckpt.normalizer.transform(windows), ckpt.encoder)
        rng = derive_rng(ckpt.config.seed, "predict", bag.entity_id)
        mean, conf, _ = predict_mc_batch(feats, ckpt.head, rng, ckpt.config.j_eval)
        agg = aggregate_bag(mean, conf, ckpt.config.top_k, bag.entity_id)
        out.append(BagResult(bag.entity_id, bag.label, agg.prediction, agg.confidence,
                             agg.top_indices, mean.tolist(), conf.tolist(), bag.true_labels))
    return out


def predict_vectors(ckpt: Checkpoint, records: Sequence[FeatureRecord]) -> list[BagResult]:
    if ckpt.model_kind != "vector":
        raise SchemaError("checkpoint is not a feature-vector model")
    out = []
    for r in sorted(records, key=lambda r: r.entity_id):
        if r.features.shape != ckpt.normalizer.mean.shape:
            raise SchemaError(f"record {r.entity_id!r} has {r.features.size} features, "
                              f"model expects {ckpt.normalizer.mean.size}")
        x = (r.features - ckpt.normalizer.mean) / ckpt.normalizer.std
        rng = derive_rng(ckpt.config.seed, "predict", r.entity_id)
        mean, conf, _ = predict_mc_batch(x[None], ckpt.head, rng, ckpt.config.j_eval)
        out.append(BagResult(r.entity_id, r.label, float(mean[0]), float(conf[0]), [0],
                             [float(mean[0])], [float(conf[0])]))
    return out


def predict(ckpt: Checkpoint, data) -> list[BagResult]:
    data = list(data)
    if data and isinstance(data[0], FeatureRecord):
        return predict_vectors(ckpt, data)
    return predict_bags(ckpt, data)


def to_modality_records(results: Sequence[BagResult], modality: str = "A") -> list[ModalityRecord]:
    return [ModalityRecord(r.entity_id, r.prediction, r.confidence, modality) for r in results]


def _safe(fn, *args):
    try:
        return fn(*args)
    except Exception as exc:  # metric undefined on this data
        log.warning("%s undefined: %s", fn.__name__, exc)
        return None


def evaluate(ckpt: Checkpoint, data, percentiles=metrics.DEFAULT_PERCENTILES) -> dict:
    """Bag-level metrics, calibration rows and per-bag predictions as a JSON-ready dict."""
    results = predict(ckpt, data)
    scores = [r.prediction for r in results]
    labels = [r.label for r in results]
    confs = [r.confidence for r in results]
    report = {
        "task": ckpt.config.task,
        "n_bags": len(results),
        "f_score": _safe(metrics.f_score, scores, labels),
        "auc_roc": _safe(metrics.auc_roc, scores, labels),
        "average_precision": _safe(metrics.average_precision, scores, labels),
        "accuracy": _safe(metrics.accuracy, scores, labels),
        "calibration": [asdict(row) for row in
                        metrics.calibration_curve(scores, labels, confs, percentiles)]
        if results else [],
    }
    inst_scores, inst_labels = [], []
    for r in results:
        if r.true_labels is not None:
            inst_scores.extend(r.instance_predictions)
            inst_labels.extend(r.true_labels)
    if inst_labels:
        report["instance_auc"] = _safe(metrics.auc_roc, inst_scores, inst_labels)
    report["bags"] = [{"entity_id": r.entity_id, "label": r.label,
                       "prediction": r.prediction, "confidence": r.confidence,
                       "top_indices": r.top_indices} for r in results]
    return report


def dumps_report(report: dict) -> str:
    return json.dumps(report, indent=2, allow_nan=False) + "\n"
