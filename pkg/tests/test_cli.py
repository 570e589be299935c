import csv
import json

import pytest

from uamil.cli import run_cli

TINY_SYNTH = {"n_pos_bags": 8, "n_neg_bags": 8, "series_len_range": [40, 60],
              "window_len": 10, "shapelet_len": 20,
              "modality_b": {"feature_dim": 4, "signal_strength": 2.0}}
TINY_TRAIN = ["--epochs", "2", "--n-neg", "8", "--n-pos", "16", "--j-train", "3",
              "--j-eval", "4"]


def test_no_arguments(capsys):
    assert run_cli([]) == 2
    assert "usage" in capsys.readouterr().err


def test_unknown_flag(capsys):
    assert run_cli(["synth", "--out", "x", "--bogus"]) == 2
    assert "usage" in capsys.readouterr().err


def test_fixed_lambda_out_of_range(tmp_path):
    assert run_cli(["fuse", "--a", "a.csv", "--b", "b.csv", "--mode", "fixed:1.5",
                    "--out", str(tmp_path / "f.csv")]) == 2


def test_missing_input_is_runtime_error(tmp_path):
    assert run_cli(["eval", "--model", str(tmp_path / "none.json"), "--data",
                    str(tmp_path / "none.jsonl"), "--report", str(tmp_path / "r.json")]) == 1


def test_ingest(tmp_path):
    rows = [f"367000001,2020-01-01T00:{m:02d}:00,40.0,-70.0,8.0,45.0,30" for m in range(30)]
    (tmp_path / "ais.csv").write_text("MMSI,BaseDateTime,LAT,LON,SOG,COG,VesselType\n"
                                      + "\n".join(rows) + "\n")
    assert run_cli(["ingest", str(tmp_path / "ais.csv"), "--out", str(tmp_path / "b.jsonl"),
                    "--task", "fishing", "--min-len", "20", "--window", "10"]) == 0
    bag = json.loads((tmp_path / "b.jsonl").read_text())
    assert bag["label"] == 1 and len(bag["windows"]) == 3


def test_custom_task_needs_codes(tmp_path):
    (tmp_path / "ais.csv").write_text("MMSI,BaseDateTime,LAT,LON,SOG,COG,VesselType\n")
    assert run_cli(["ingest", str(tmp_path / "ais.csv"), "--out", str(tmp_path / "b.jsonl"),
                    "--task", "custom"]) == 2


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "synth.json").write_text(json.dumps(TINY_SYNTH))
    assert run_cli(["synth", "--out", str(d / "data"), "--config", str(d / "synth.json")]) == 0
    return d


class TestSmokePath:
    def test_synth_outputs(self, workdir):
        names = {p.name for p in (workdir / "data").iterdir()}
        assert names == {"bags.jsonl", "modality_b.jsonl", "synth_config.json"}

    def test_full_path(self, workdir):
        d, data = workdir, workdir / "data"
        assert run_cli(["train", "--data", str(data / "bags.jsonl"), "--out",
                        str(d / "a.json"), "--split", "all", *TINY_TRAIN]) == 0
        assert run_cli(["train", "--data", str(data / "modality_b.jsonl"), "--out",
                        str(d / "b.json"), "--split", "all", *TINY_TRAIN]) == 0
        assert run_cli(["eval", "--model", str(d / "a.json"), "--data",
                        str(data / "bags.jsonl"), "--report", str(d / "report.json"),
                        "--split", "all"]) == 0
        assert (d / "report_calibration.png").stat().st_size > 0
        assert (d / "report_roc.png").stat().st_size > 0
        for tag in ("a", "b"):
            src = "bags.jsonl" if tag == "a" else "modality_b.jsonl"
            assert run_cli(["predict", "--model", str(d / f"{tag}.json"), "--data",
                            str(data / src), "--out", str(d / f"pred_{tag}.csv"),
                            "--split", "all"]) == 0
        assert run_cli(["fuse", "--a", str(d / "pred_a.csv"), "--b", str(d / "pred_b.csv"),
                        "--out", str(d / "fused.csv"), "--sweep", str(d / "sweep.csv"),
                        "--labels", str(data / "bags.jsonl")]) == 0
        with open(d / "fused.csv") as fh:
            assert len(list(csv.DictReader(fh))) == 16
        sweep = (d / "sweep.csv").read_text().splitlines()
        assert sweep[0] == "lambda,recall" and sweep[-1].startswith("adaptive,")
        assert (d / "sweep_recall.png").exists() and (d / "sweep_lambda_hist.png").exists()
        assert run_cli(["calib", "--report", str(d / "report.json"), "--out",
                        str(d / "calib.csv")]) == 0
        assert (d / "calib.csv").read_text().startswith("percentile,threshold,accuracy,coverage")

    def test_sweep_needs_labels(self, workdir, tmp_path):
        for tag in ("A", "B"):
            (tmp_path / f"{tag}.csv").write_text("entity_id,prediction,confidence\nx,0.5,0.5\n")
        assert run_cli(["fuse", "--a", str(tmp_path / "A.csv"), "--b", str(tmp_path / "B.csv"),
                        "--out", str(tmp_path / "f.csv"), "--sweep", str(tmp_path / "s.csv")]) == 2

    def test_rerun_is_idempotent(self, workdir):
        d = workdir
        paths = []
        for i in range(2):
            out = d / f"rerun{i}.json"
            assert run_cli(["train", "--data", str(d / "data" / "bags.jsonl"), "--out", str(out),
                            *TINY_TRAIN]) == 0
            paths.append(out.read_bytes())
        assert paths[0] == paths[1]

    def test_calib_to_stdout(self, workdir, capsys):
        d = workdir
        assert run_cli(["train", "--data", str(d / "data" / "bags.jsonl"), "--out",
                        str(d / "m.json"), "--split", "all", *TINY_TRAIN]) == 0
        assert run_cli(["eval", "--model", str(d / "m.json"), "--data",
                        str(d / "data" / "bags.jsonl"), "--report", str(d / "r.json"),
                        "--split", "all", "--no-figures"]) == 0
        capsys.readouterr()
        assert run_cli(["calib", "--report", str(d / "r.json"), "--percentiles", "0,50"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 3
