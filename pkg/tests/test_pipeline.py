import json

import numpy as np
import pytest

from uamil.errors import (CheckpointError, ConfigError, SchemaError, TrainingError,
                          UnsupportedVersionError)
from uamil.ingest import SyntheticConfig, generate_modality_pair, generate_synthetic, split
from uamil.pipeline import (TrainConfig, dumps_checkpoint, dumps_report, evaluate,
                            load_checkpoint, predict, save_checkpoint, train, train_vector)
from uamil.series import Bag

TINY = dict(epochs=2, n_neg=8, n_pos=16, j_train=3, j_eval=4, feature_dim=8)


@pytest.fixture(scope="module")
def small_bags():
    cfg = SyntheticConfig(n_pos_bags=10, n_neg_bags=10, series_len_range=(40, 60),
                          window_len=10, shapelet_len=20, seed=3)
    return generate_synthetic(cfg)


@pytest.fixture(scope="module")
def small_ckpt(small_bags):
    return train(TrainConfig(**TINY), small_bags)


class TestTrainConfig:
    def test_unknown_field(self):
        with pytest.raises(ConfigError):
            TrainConfig.from_dict({"epoch": 3})

    @pytest.mark.parametrize("kw", [dict(epochs=0), dict(learning_rate=0.0), dict(j_eval=1),
                                    dict(n_neg=0, n_pos=0), dict(median_scope="batch")])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            TrainConfig(**kw).validate()

    def test_round_trip(self):
        cfg = TrainConfig(epochs=3, top_k=2, attention=False)
        assert TrainConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


class TestTrain:
    def test_deterministic_checkpoint(self, small_bags, small_ckpt):
        again = train(TrainConfig(**TINY), list(reversed(small_bags)))
        assert dumps_checkpoint(again) == dumps_checkpoint(small_ckpt)

    def test_history_and_epoch(self, small_ckpt):
        assert small_ckpt.epoch == 2 and len(small_ckpt.loss_history) == 2
        assert all(np.isfinite(small_ckpt.loss_history))

    def test_single_bag_per_class(self):
        rng = np.random.default_rng(0)
        bags = [Bag.from_windows("a", 0, rng.normal(size=(2, 4, 10))),
                Bag.from_windows("b", 1, rng.normal(size=(2, 4, 10)))]
        ckpt = train(TrainConfig(**TINY), bags)
        assert len(predict(ckpt, bags)) == 2

    def test_one_class_rejected(self, small_bags):
        with pytest.raises(TrainingError, match="both classes"):
            train(TrainConfig(**TINY), [b for b in small_bags if b.label == 1])

    def test_window_length_mismatch(self, small_bags):
        with pytest.raises(SchemaError):
            train(TrainConfig(**TINY, window_len=25), small_bags)

    def test_loss_decreases_on_benchmark(self):
        bags, _ = split(generate_synthetic(SyntheticConfig(seed=0)))
        ckpt = train(TrainConfig(epochs=10, seed=0), bags)
        assert ckpt.loss_history[9] < ckpt.loss_history[0]

    def test_interleaved_runs_match_sequential(self, small_bags):
        a_cfg, b_cfg = TrainConfig(**TINY), TrainConfig(**{**TINY, "seed": 5})
        seq = [dumps_checkpoint(train(a_cfg, small_bags)), dumps_checkpoint(train(b_cfg, small_bags))]
        inter = []

        def nested(_):
            if not inter:
                inter.append(dumps_checkpoint(train(b_cfg, small_bags)))

        outer = dumps_checkpoint(train(a_cfg, small_bags, callback=nested))
        assert [outer, inter[0]] == seq


class TestCheckpoint:
    def test_save_load_save_bytes(self, small_ckpt, tmp_path):
        save_checkpoint(small_ckpt, tmp_path / "a.json")
        save_checkpoint(load_checkpoint(tmp_path / "a.json"), tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_loaded_predictions_identical(self, small_ckpt, small_bags, tmp_path):
        save_checkpoint(small_ckpt, tmp_path / "a.json")
        back = load_checkpoint(tmp_path / "a.json")
        assert predict(back, small_bags) == predict(small_ckpt, small_bags)

    def test_version_guard(self, small_ckpt, tmp_path):
        d = json.loads(dumps_checkpoint(small_ckpt))
        d["format_version"] = 999
        (tmp_path / "v.json").write_text(json.dumps(d))
        with pytest.raises(UnsupportedVersionError):
            load_checkpoint(tmp_path / "v.json")

    def test_truncated(self, small_ckpt, tmp_path):
        (tmp_path / "t.json").write_text(dumps_checkpoint(small_ckpt)[:100])
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "t.json")

    def test_field_order(self, small_ckpt):
        assert list(json.loads(dumps_checkpoint(small_ckpt))) == [
            "format_version", "model_kind", "config", "epoch", "loss_history",
            "normalizer", "encoder", "head", "rng_state"]


class TestEvaluate:
    def test_report_contents(self, small_ckpt, small_bags):
        report = evaluate(small_ckpt, small_bags)
        assert report["n_bags"] == 20
        assert 0.0 <= report["auc_roc"] <= 1.0
        assert "instance_auc" in report
        assert [r["percentile"] for r in report["calibration"]] == list(range(0, 100, 10))
        for b in report["bags"]:
            assert 0.0 <= b["prediction"] <= 1.0 and 0.0 <= b["confidence"] <= 1.0

    def test_order_independent(self, small_ckpt, small_bags):
        a = dumps_report(evaluate(small_ckpt, small_bags))
        b = dumps_report(evaluate(small_ckpt, list(reversed(small_bags))))
        assert a == b

    def test_channel_mismatch(self, small_ckpt):
        bag = Bag.from_windows("x", 1, np.zeros((2, 3, 10)))
        with pytest.raises(SchemaError):
            evaluate(small_ckpt, [bag])


def test_vector_model(small_bags):
    recs = generate_modality_pair(small_bags, feature_dim=4, signal_strength=3.0, seed=1)
    ckpt = train_vector(TrainConfig(**{**TINY, "epochs": 20}), recs)
    report = evaluate(ckpt, recs)
    assert report["auc_roc"] > 0.8
    assert "instance_auc" not in report
