"""Command-line entry point.

Subcommands::

    synth     write a synthetic fault scenario as CSV
    ingest    IMS raw snapshot directory -> RMS feature CSV
    train     fit a model, write checkpoint.json and loss.csv
    detect    score the test segment with a checkpoint -> anomaly.csv
    severity  anomaly.csv -> severity.csv
    plot      anomaly.csv (+ severity.csv) -> one SVG per node
    run       all of the above in one go

Config-driven subcommands accept ``--config file.json``, ``--preset NAME``
and ``--<field> value`` for every config field (dashes or underscores).

Exit codes: 0 ok, 1 config error, 2 data error, 3 training divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import detection, pipeline, severity
from .errors import ConfigError, TgcnFaultError
from .ingest import features_to_csv, generate_synthetic, ingest_ims
from .plotting import render_plots
from .tables import read_anomaly_series

log = logging.getLogger("tgcn_fault")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError("arguments", message)


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config document")
    for name in pipeline.FIELD_TYPES:
        flag = "--" + name.replace("_", "-")
        aliases = [flag] if name.replace("_", "-") == name else [flag, "--" + name]
        p.add_argument(*aliases, dest=f"cfg_{name}", metavar="VALUE", help=argparse.SUPPRESS)


def _config_from(args) -> pipeline.RunConfig:
    doc = pipeline.load_config_file(args.config) if args.config else {}
    overrides = {}
    for name in pipeline.FIELD_TYPES:
        raw = getattr(args, f"cfg_{name}", None)
        if raw is not None:
            overrides[name] = pipeline.coerce(name, raw)
    return pipeline.build_config(doc, overrides)


def create_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tgcn-fault", description="T-GCN fault detection and severity estimation")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic fault scenario")
    _add_config_args(p)
    p.add_argument("--out", required=True, help="CSV path for the features")

    p = sub.add_parser("ingest", help="IMS raw directory to feature CSV")
    p.add_argument("directory")
    p.add_argument("--channels", type=int, default=4)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train a model")
    _add_config_args(p)

    p = sub.add_parser("detect", help="score data with a trained checkpoint")
    _add_config_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", help="anomaly CSV path (default: OUT_DIR/anomaly.csv)")

    p = sub.add_parser("severity", help="severity index from an anomaly CSV")
    p.add_argument("anomaly")
    p.add_argument("--m", type=float, default=severity.DEFAULT_WEIGHT)
    p.add_argument("--out", required=True)

    p = sub.add_parser("plot", help="render per-node SVG figures")
    p.add_argument("anomaly")
    p.add_argument("--severity")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("run", help="full pipeline")
    _add_config_args(p)
    return parser


def _cmd_synth(args):
    cfg = _config_from(args)
    g = pipeline.graph_from_spec(cfg.graph, cfg.synth_nodes)
    syn = generate_synthetic(
        seed=cfg.seed, n=cfg.synth_nodes, length=cfg.synth_length, onset_frac=cfg.synth_onset,
        fault_nodes=cfg.synth_fault_nodes, gain=cfg.synth_gain, fault_amp=cfg.synth_fault_amp,
        noise=cfg.synth_noise, graph=g,
    )
    Path(args.out).write_text(features_to_csv(syn.features, syn.labels), encoding="utf-8")
    print(json.dumps({"out": args.out, "onset": syn.onset, "fault_nodes": list(syn.fault_nodes)}))


def _cmd_ingest(args):
    x = ingest_ims(args.directory, args.channels)
    labels = [f"bearing{i + 1}" for i in range(x.shape[0])]
    Path(args.out).write_text(features_to_csv(x, labels), encoding="utf-8")
    print(f"{args.out}: {x.shape[0]} channels x {x.shape[1]} steps")


def _cmd_train(args):
    cfg = _config_from(args)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with pipeline.stage("acquire"):
        src = pipeline.load_source(cfg)
    with pipeline.stage("train"):
        result, _ = pipeline.fit(cfg, src)
        pipeline.save_checkpoint(result.model, out / "checkpoint.json")
        (out / "loss.csv").write_text(result.loss_csv(), encoding="utf-8")
    print(f"{out / 'checkpoint.json'}: final train_mse={result.history[-1][1]:.6g}")


def _cmd_detect(args):
    cfg = _config_from(args)
    with pipeline.stage("acquire"):
        src = pipeline.load_source(cfg)
    with pipeline.stage("detect"):
        ds, det = pipeline.detect_from_checkpoint(args.checkpoint, src.features)
        labels = list(ds.labels) or src.labels
        path = Path(args.out) if args.out else Path(cfg.out_dir) / "anomaly.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(detection.to_csv(det.test, labels), encoding="utf-8")
    print(f"{path}: {int(detection.flag(det.test).sum())} flagged node-steps")


def _cmd_severity(args):
    if args.m < 0:
        raise ConfigError("m", f"must be non-negative, got {args.m}")
    series, labels = read_anomaly_series(args.anomaly)
    Path(args.out).write_text(severity.to_csv(series, labels, args.m), encoding="utf-8")
    print(args.out)


def _cmd_plot(args):
    for label, path in render_plots(args.anomaly, args.severity, args.out_dir).items():
        print(f"{label}: {path}")


def _cmd_run(args):
    cfg = _config_from(args)
    art = pipeline.run_pipeline(cfg)
    print(json.dumps({"out_dir": str(art.out_dir), "fault_count": art.summary["fault_count"]}))


COMMANDS = {
    "synth": _cmd_synth,
    "ingest": _cmd_ingest,
    "train": _cmd_train,
    "detect": _cmd_detect,
    "severity": _cmd_severity,
    "plot": _cmd_plot,
    "run": _cmd_run,
}


def main(argv=None) -> int:
    try:
        args = create_parser().parse_args(argv)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
        )
        COMMANDS[args.command](args)
    except TgcnFaultError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
