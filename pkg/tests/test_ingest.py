import numpy as np
import pytest

from uamil import metrics
from uamil.errors import ConfigError, SchemaError
from uamil.ingest import (AisRecord, SyntheticConfig, TaskSpec, build_bags, build_series,
                          generate_modality_pair, generate_synthetic, parse_ais_csv,
                          read_bag_file, read_feature_file, split, write_bag_file,
                          write_feature_file)

HEADER = "MMSI,BaseDateTime,LAT,LON,SOG,COG,VesselType\n"


def write_csv(tmp_path, rows, header=HEADER):
    p = tmp_path / "ais.csv"
    p.write_text(header + "".join(r + "\n" for r in rows))
    return p


def track(mmsi, n, vessel_type=30, t0=0):
    return [AisRecord(mmsi, float(t0 + 60 * i), 40.0 + 0.001 * i, -70.0, 8.0, 45.0, vessel_type)
            for i in range(n)]


class TestParse:
    def test_happy_path(self, tmp_path):
        p = write_csv(tmp_path, [
            "367000001,2020-01-01T00:00:00,40.0,-70.0,10.0,90.0,30",
            "367000001,2020-01-01T00:01:00,40.1,-70.1,10.5,91.0,30",
            "367000002,2020-01-01T00:00:00Z,41.0,-71.0,0.0,0.0,",
        ])
        records, report = parse_ais_csv(p)
        assert len(records) == 3
        assert report.rejected == 0
        assert records[1].timestamp - records[0].timestamp == 60.0
        assert records[2].vessel_type is None

    def test_lat_out_of_range_is_skipped(self, tmp_path):
        p = write_csv(tmp_path, [
            "367000001,2020-01-01T00:00:00,91.0,-70.0,10.0,90.0,30",
            "367000001,2020-01-01T00:01:00,40.0,-70.0,10.0,90.0,30",
        ])
        records, report = parse_ais_csv(p)
        assert len(records) == 1
        assert report.reasons["lat out of range"] == 1

    @pytest.mark.parametrize("row,reason", [
        ("367000001,2020-01-01T00:00:00,40.0,-70.0,abc,90.0,30", "unparseable number"),
        ("367000001,2020-01-01T00:00:00,40.0,-70.0,10.0", "wrong arity"),
        ("367000001,2020-01-01T00:00:00,40.0,-181.0,10.0,90.0,30", "lon out of range"),
        ("367000001,not-a-time,40.0,-70.0,10.0,90.0,30", "bad timestamp"),
        ("367000001,2020-01-01T00:00:00,40.0,-70.0,10.0,360.0,30", "cog out of range"),
        ("36700,2020-01-01T00:00:00,40.0,-70.0,10.0,90.0,30", "bad mmsi"),
    ])
    def test_reject_reasons(self, tmp_path, row, reason):
        records, report = parse_ais_csv(write_csv(tmp_path, [row]))
        assert records == []
        assert report.reasons[reason] == 1

    def test_missing_column_is_fatal(self, tmp_path):
        p = write_csv(tmp_path, [], header="MMSI,BaseDateTime,LAT,LON,COG,VesselType\n")
        with pytest.raises(SchemaError, match="SOG"):
            parse_ais_csv(p)


class TestBuildBags:
    def test_length_filter(self):
        records = track("111111111", 250) + track("222222222", 80)
        bags = build_bags(records, TaskSpec.preset("fishing"), min_len=100, window_len=100)
        assert [b.entity_id for b in bags] == ["111111111"]
        assert len(bags[0].instances) == 2

    def test_task_mapping(self):
        records = track("111111111", 100, vessel_type=30)
        assert build_bags(records, TaskSpec.preset("fishing"))[0].label == 1
        assert build_bags(records, TaskSpec.preset("cargo"))[0].label == 0
        assert build_bags(track("1" * 9, 100, 75), TaskSpec.preset("cargo"))[0].label == 1

    def test_duplicate_timestamp_keeps_first(self):
        records = track("111111111", 100)
        dup = AisRecord("111111111", records[5].timestamp, 0.0, 0.0, 99.0, 0.0, 30)
        series, _ = build_series(records + [dup])["111111111"]
        assert series.length == len(records + [dup]) - 1
        assert series.channel("sog")[5] == 8.0
        # one row short of min_len after dedup -> dropped
        assert build_bags(records + [dup], TaskSpec.preset("fishing"), min_len=101) == []

    def test_outputs_are_kinematic(self):
        bag = build_bags(track("111111111", 100), TaskSpec.preset("fishing"))[0]
        w = bag.instances[0].window
        assert w.shape == (4, 100)
        np.testing.assert_allclose(np.hypot(w[2], w[3]), 8.0, atol=1e-9)

    def test_task_spec_requires_codes(self):
        with pytest.raises(ConfigError):
            TaskSpec("custom", frozenset())


def small_config(**kw):
    base = dict(n_pos_bags=3, n_neg_bags=3, series_len_range=(50, 90), window_len=10,
                shapelet_len=20, seed=7)
    base.update(kw)
    return SyntheticConfig(**base)


class TestSynthetic:
    def test_deterministic_bytes(self, tmp_path):
        cfg = small_config(n_pos_bags=1, n_neg_bags=1)
        write_bag_file(generate_synthetic(cfg), tmp_path / "a.jsonl")
        write_bag_file(generate_synthetic(cfg), tmp_path / "b.jsonl")
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()

    def test_instance_labels_by_construction(self):
        for bag in generate_synthetic(small_config(n_pos_bags=10, n_neg_bags=10)):
            if bag.label:
                assert sum(bag.true_labels) == 2
            else:
                assert sum(bag.true_labels) == 0

    def test_planted_windows_are_slow(self):
        cfg = SyntheticConfig(n_pos_bags=100, n_neg_bags=0, series_len_range=(100, 150),
                              window_len=25, shapelet_len=25, seed=1)
        inside, outside = [], []
        for bag in generate_synthetic(cfg):
            for inst in bag.instances:
                speed = np.hypot(inst.window[2], inst.window[3]).mean()
                (inside if inst.true_label else outside).append(speed)
        assert np.mean(inside) < np.mean(outside)
        assert np.mean(inside) < 3.0 < 10.0 < np.mean(outside)

    @pytest.mark.parametrize("kw", [dict(shapelet_len=100), dict(shapelet_len=15),
                                    dict(series_len_range=(5, 90))])
    def test_infeasible_config(self, kw):
        with pytest.raises(ConfigError):
            generate_synthetic(small_config(**kw))

    def test_bag_file_round_trip(self, tmp_path):
        bags = generate_synthetic(small_config())
        write_bag_file(bags, tmp_path / "b.jsonl")
        back = read_bag_file(tmp_path / "b.jsonl")
        assert [b.entity_id for b in back] == [b.entity_id for b in bags]
        for x, y in zip(bags, back):
            np.testing.assert_array_equal(x.windows, y.windows)
            assert x.true_labels == y.true_labels

    def test_bag_file_field_names(self, tmp_path):
        import json
        write_bag_file(generate_synthetic(small_config()), tmp_path / "b.jsonl")
        first = json.loads((tmp_path / "b.jsonl").read_text().splitlines()[0])
        assert list(first) == ["entity_id", "label", "windows", "true_instance_labels"]


def stub_auc(records):
    """Two-fold class-mean-direction classifier, AUC pooled over every record."""
    X = np.stack([r.features for r in records])
    y = np.array([r.label for r in records])
    folds = np.arange(len(records)) % 2
    scores = np.empty(len(records))
    for f in (0, 1):
        fit = folds != f
        direction = X[fit & (y == 1)].mean(0) - X[fit & (y == 0)].mean(0)
        scores[~fit] = X[~fit] @ direction
    return metrics.auc_roc(scores, y)


@pytest.fixture(scope="module")
def bags500():
    cfg = SyntheticConfig(n_pos_bags=250, n_neg_bags=250, series_len_range=(25, 25),
                          window_len=25, shapelet_len=25, seed=11)
    return generate_synthetic(cfg)


class TestModalityPair:
    def test_no_signal(self, bags500):
        recs = generate_modality_pair(bags500, feature_dim=8, signal_strength=0.0, seed=2)
        assert stub_auc(recs) == pytest.approx(0.5, abs=0.05)

    def test_strong_signal(self, bags500):
        recs = generate_modality_pair(bags500, feature_dim=8, signal_strength=5.0,
                                      noise_std=1.0, seed=2)
        assert stub_auc(recs) > 0.99

    def test_missing_fraction(self, bags500):
        recs = generate_modality_pair(bags500[:100], missing_fraction=0.3, seed=4)
        assert len(recs) == 70
        ids = {b.entity_id for b in bags500[:100]}
        assert {r.entity_id for r in recs} <= ids

    def test_feature_file_round_trip(self, bags500, tmp_path):
        recs = generate_modality_pair(bags500[:10], seed=4)
        write_feature_file(recs, tmp_path / "f.jsonl")
        back = read_feature_file(tmp_path / "f.jsonl")
        for a, b in zip(recs, back):
            assert a.entity_id == b.entity_id and a.label == b.label
            np.testing.assert_array_equal(a.features, b.features)


def test_split_is_deterministic_and_roughly_70_30(bags500):
    train, test = split(bags500)
    train2, test2 = split(list(reversed(bags500)))
    assert {b.entity_id for b in test} == {b.entity_id for b in test2}
    assert 0.22 < len(test) / len(bags500) < 0.38
