"""Command-line interface.

Exit status is 0 on success, 2 on usage errors and 1 on runtime errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

from . import fusion, ingest, pipeline
from .errors import UamilError

log = logging.getLogger("uamil")

CONFIG_FLAGS = {
    # flag -> (TrainConfig field, type)
    "--task": ("task", str),
    "--seed": ("seed", int),
    "--epochs": ("epochs", int),
    "--steps-per-epoch": ("steps_per_epoch", int),
    "--learning-rate": ("learning_rate", float),
    "--n-neg": ("n_neg", int),
    "--n-pos": ("n_pos", int),
    "--k": ("k", float),
    "--j-train": ("j_train", int),
    "--j-eval": ("j_eval", int),
    "--prior-sigma": ("prior_sigma", float),
    "--top-k": ("top_k", int),
    "--median-scope": ("median_scope", str),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _fusion_mode(text: str) -> str:
    try:
        fusion.parse_mode(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))
    return text


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="uamil", description="Uncertainty-aware MIL for long time series.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("synth", help="generate synthetic bags and a paired second modality")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--config", help="JSON synthetic config (optional 'modality_b' section)")
    s.add_argument("--seed", type=int)

    s = sub.add_parser("ingest", help="AIS CSV -> bag file")
    s.add_argument("csv")
    s.add_argument("--out", required=True)
    s.add_argument("--task", required=True, choices=["fishing", "cargo", "tanker", "custom"])
    s.add_argument("--codes", help="comma-separated positive vessel-type codes (custom task)")
    s.add_argument("--min-len", type=int, default=100)
    s.add_argument("--window", type=int, default=100)
    s.add_argument("--max-reject-fraction", type=float, default=0.1)

    s = sub.add_parser("train", help="train a model on a bag or feature file")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--config", help="JSON file with TrainConfig fields")
    s.add_argument("--split", choices=["train", "test", "all"], default="train")
    for flag, (_, typ) in CONFIG_FLAGS.items():
        s.add_argument(flag, type=typ)
    s.add_argument("--attention", dest="attention", action="store_true", default=None)
    s.add_argument("--no-attention", dest="attention", action="store_false")

    s = sub.add_parser("eval", help="evaluate a checkpoint, write a JSON report and figures")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--report", required=True)
    s.add_argument("--split", choices=["train", "test", "all"], default="test")
    s.add_argument("--no-figures", action="store_true")

    s = sub.add_parser("predict", help="write modality-record CSV for fusion")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--split", choices=["train", "test", "all"], default="test")

    s = sub.add_parser("fuse", help="fuse two modality-record CSVs")
    s.add_argument("--a", required=True)
    s.add_argument("--b", required=True)
    s.add_argument("--mode", type=_fusion_mode, default="adaptive",
                   help="adaptive | fixed:<lambda>")
    s.add_argument("--out", required=True)
    s.add_argument("--sweep", help="write the fixed-weight recall grid to this CSV")
    s.add_argument("--labels", help="bag or feature file supplying labels for --sweep")
    s.add_argument("--no-figures", action="store_true")

    s = sub.add_parser("calib", help="calibration table from an eval report")
    s.add_argument("--report", required=True)
    s.add_argument("--out", help="CSV path (stdout when omitted)")
    s.add_argument("--percentiles", help="comma-separated, default 0,10,...,90")
    s.add_argument("--no-figures", action="store_true")
    return p


def _load_data(path, split: str):
    kind = ingest.sniff_data_kind(path)
    data = ingest.read_bag_file(path) if kind == "bags" else ingest.read_feature_file(path)
    if split != "all":
        train, test = ingest.split(data)
        data = train if split == "train" else test
    return kind, data


def cmd_synth(args) -> int:
    cfg_dict = json.loads(Path(args.config).read_text()) if args.config else {}
    modality = dict(cfg_dict.pop("modality_b", {}))
    cfg = ingest.SyntheticConfig.from_dict(cfg_dict)
    if args.seed is not None:
        cfg.seed = args.seed
    bags = ingest.generate_synthetic(cfg)
    pair = ingest.generate_modality_pair(
        bags, feature_dim=modality.get("feature_dim", 16),
        signal_strength=modality.get("signal_strength", 1.0),
        noise_std=modality.get("noise_std", 1.0),
        seed=modality.get("seed", cfg.seed + 1),
        missing_fraction=modality.get("missing_fraction", 0.0))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ingest.write_bag_file(bags, out / "bags.jsonl")
    ingest.write_feature_file(pair, out / "modality_b.jsonl")
    (out / "synth_config.json").write_text(
        json.dumps({**cfg.to_dict(), "modality_b": modality}, indent=2) + "\n")
    log.info("wrote %d bags and %d feature records to %s", len(bags), len(pair), out)
    return 0


def cmd_ingest(args) -> int:
    if args.task == "custom":
        if not args.codes:
            raise UsageError("--codes is required for the custom task")
        task = ingest.TaskSpec("custom", frozenset(int(c) for c in args.codes.split(",")))
    else:
        task = ingest.TaskSpec.preset(args.task)
    records, report = ingest.parse_ais_csv(args.csv)
    bags = ingest.build_bags(records, task, args.min_len, args.window, report,
                             args.max_reject_fraction)
    ingest.write_bag_file(bags, args.out)
    print(report.summary(), file=sys.stderr)
    print(f"bags written: {len(bags)}", file=sys.stderr)
    return 0


def _train_config(args) -> pipeline.TrainConfig:
    d = json.loads(Path(args.config).read_text()) if args.config else {}
    for flag, (name, _) in CONFIG_FLAGS.items():
        value = getattr(args, flag.lstrip("-").replace("-", "_"))
        if value is not None:
            d[name] = value
    if args.attention is not None:
        d["attention"] = args.attention
    return pipeline.TrainConfig.from_dict(d)


def cmd_train(args) -> int:
    config = _train_config(args)
    kind, data = _load_data(args.data, args.split)
    if kind == "bags":
        ckpt = pipeline.train(config, data)
    else:
        ckpt = pipeline.train_vector(config, data)
    pipeline.save_checkpoint(ckpt, args.out)
    log.info("final epoch loss %.6f", ckpt.loss_history[-1])
    return 0


def cmd_eval(args) -> int:
    ckpt = pipeline.load_checkpoint(args.model)
    _, data = _load_data(args.data, args.split)
    report = pipeline.evaluate(ckpt, data)
    Path(args.report).write_text(pipeline.dumps_report(report), encoding="utf-8")
    if not args.no_figures and report["bags"]:
        from . import plotting
        plotting.plot_calibration(report["calibration"],
                                  plotting.figure_path(args.report, "calibration"))
        if report["auc_roc"] is not None:
            plotting.plot_roc([b["prediction"] for b in report["bags"]],
                              [b["label"] for b in report["bags"]],
                              plotting.figure_path(args.report, "roc"), report["auc_roc"])
    return 0


def cmd_predict(args) -> int:
    ckpt = pipeline.load_checkpoint(args.model)
    _, data = _load_data(args.data, args.split)
    results = pipeline.predict(ckpt, data)
    fusion.write_modality_csv(pipeline.to_modality_records(results), args.out)
    return 0


def cmd_fuse(args) -> int:
    a = fusion.read_modality_csv(args.a, "A")
    b = fusion.read_modality_csv(args.b, "B")
    fused = fusion.fuse_dataset(a, b, args.mode)
    fusion.write_fused_csv(fused, args.out)
    if args.sweep:
        if not args.labels:
            raise UsageError("--sweep needs --labels")
        labels = ingest.read_labels(args.labels)
        rows, adaptive, lams = fusion.fixed_lambda_sweep(a, b, labels)
        with open(args.sweep, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("lambda", "recall"))
            for lam, rec in rows:
                w.writerow((repr(lam), repr(rec)))
            w.writerow(("adaptive", repr(adaptive)))
        if not args.no_figures:
            from . import plotting
            mean_lam = sum(lams) / len(lams)
            plotting.plot_fusion_sweep(rows, adaptive, plotting.figure_path(args.sweep, "recall"),
                                       mean_lam)
            plotting.plot_lambda_hist(lams, plotting.figure_path(args.sweep, "lambda_hist"))
    return 0


def cmd_calib(args) -> int:
    report = json.loads(Path(args.report).read_text(encoding="utf-8"))
    if args.percentiles:
        from .metrics import calibration_curve
        from dataclasses import asdict
        pct = [float(p) for p in args.percentiles.split(",")]
        bags = report["bags"]
        rows = [asdict(r) for r in calibration_curve([b["prediction"] for b in bags],
                                                     [b["label"] for b in bags],
                                                     [b["confidence"] for b in bags], pct)]
    else:
        rows = report["calibration"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("percentile", "threshold", "accuracy", "coverage"))
    for r in rows:
        acc = "" if r["accuracy"] is None else repr(r["accuracy"])
        w.writerow((repr(r["percentile"]), repr(r["threshold"]), acc, repr(r["coverage"])))
    if args.out:
        Path(args.out).write_text(buf.getvalue(), encoding="utf-8")
        if not args.no_figures:
            from . import plotting
            plotting.plot_calibration(rows, plotting.figure_path(args.out, "calibration"))
    else:
        sys.stdout.write(buf.getvalue())
    return 0


COMMANDS = {"synth": cmd_synth, "ingest": cmd_ingest, "train": cmd_train, "eval": cmd_eval,
            "predict": cmd_predict, "fuse": cmd_fuse, "calib": cmd_calib}


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_help(sys.stderr)
        return 2
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"uamil {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (UamilError, OSError, ValueError, KeyError) as exc:
        print(f"uamil {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
