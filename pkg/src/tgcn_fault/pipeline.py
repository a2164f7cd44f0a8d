"""Run configuration and end-to-end orchestration.

Stages run in order: acquire -> preprocess -> train -> detect -> severity
-> report. Every artifact lands in ``RunConfig.out_dir``:

    checkpoint.json  loss.csv  anomaly.csv  severity.csv  summary.json
    plots/node*_*.svg
"""

from __future__ import annotations

import contextlib
import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import detection, severity
from .errors import ConfigError, DataError, TgcnFaultError
from .graph import Graph, graph_from_spec, normalize
from .ingest import generate_synthetic, ingest_csv, ingest_ims
from .model import TgcnModel, init_params, load_checkpoint, save_checkpoint
from .plotting import render_plots
from .training import (
    Dataset,
    TrainResult,
    make_windows,
    normalize_dataset,
    persistence_mse,
    split_bounds,
    train,
)

log = logging.getLogger(__name__)

SOURCES = ("synthetic", "csv", "ims-raw")


@dataclass
class RunConfig:
    preset: str | None = None
    graph: object = "path4"
    window: int = 4
    hidden: int = 16
    layers: int = 2
    batch_size: int = 32
    lr: float = 0.001
    epochs: int = 50
    train_frac: float = 0.4
    val_frac: float = 0.2
    m: float = severity.DEFAULT_WEIGHT
    seed: int = 7
    clip_norm: float | None = None
    source: str = "synthetic"
    input: str | None = None
    channels: int = 4
    synth_nodes: int = 4
    synth_length: int = 1000
    synth_onset: float = 0.5
    synth_gain: float = 1.5
    synth_fault_amp: float = 0.5
    synth_fault_nodes: list = field(default_factory=lambda: [0])
    synth_noise: float = 0.05
    out_dir: str = "out"

    def validate(self) -> "RunConfig":
        if self.preset is not None and self.preset not in PRESETS:
            raise ConfigError("preset", f"unknown preset {self.preset!r} (known: {sorted(PRESETS)})")
        for name in ("window", "hidden", "layers", "batch_size", "epochs", "channels",
                     "synth_nodes", "synth_length"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise ConfigError(name, f"must be a positive integer, got {v!r}")
        for name in ("train_frac", "val_frac", "synth_onset"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not 0.0 < v < 1.0:
                raise ConfigError(name, f"must lie strictly between 0 and 1, got {v!r}")
        if not isinstance(self.lr, (int, float)) or not self.lr > 0:
            raise ConfigError("lr", f"must be positive, got {self.lr!r}")
        if not isinstance(self.m, (int, float)) or not self.m >= 0:
            raise ConfigError("m", f"must be non-negative, got {self.m!r}")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise ConfigError("clip_norm", f"must be positive when set, got {self.clip_norm!r}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ConfigError("seed", f"must be a non-negative integer, got {self.seed!r}")
        for name in ("synth_gain", "synth_noise", "synth_fault_amp"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or v < 0:
                raise ConfigError(name, f"must be non-negative, got {v!r}")
        if self.source not in SOURCES:
            raise ConfigError("source", f"must be one of {SOURCES}, got {self.source!r}")
        if self.source != "synthetic" and not self.input:
            raise ConfigError("input", f"source {self.source!r} needs an input path")
        for i in self.synth_fault_nodes:
            if not isinstance(i, int) or not 0 <= i < self.synth_nodes:
                raise ConfigError("synth_fault_nodes", f"node {i!r} out of range")
        graph_from_spec(self.graph)
        return self

    def echo(self) -> dict:
        """Config as recorded in the summary; the output location is omitted."""
        d = dataclasses.asdict(self)
        d.pop("out_dir")
        return d


PRESETS = {
    "bearing": dict(
        graph="path4", window=4, batch_size=32, hidden=128, layers=2, lr=0.001, epochs=50,
        train_frac=0.4, val_frac=0.2, source="ims-raw", channels=4,
    ),
    "fanjet": dict(
        graph="pair2", window=4, batch_size=4, hidden=256, layers=2, lr=0.001, epochs=50,
        train_frac=0.6, val_frac=0.3, source="csv",
    ),
    "synthetic": dict(
        graph="path4", window=4, batch_size=32, hidden=16, layers=2, lr=0.001, epochs=50,
        train_frac=0.4, val_frac=0.2, source="synthetic", synth_nodes=4, synth_length=1000,
        synth_onset=0.5, synth_gain=1.5, synth_fault_nodes=[0],
    ),
}

FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def coerce(name: str, text: str):
    """Convert a ``--key value`` string to the type of config field ``name``."""
    kind = FIELD_TYPES.get(name)
    if kind is None:
        raise ConfigError(name, "unknown config field")
    try:
        if text.lower() in ("none", "null") and "None" in kind:
            return None
        if kind == "int":
            return int(text)
        if kind.startswith("float"):
            return float(text)
        if kind == "list":
            return [int(v) for v in text.split(",") if v.strip()]
        if kind == "object":
            return json.loads(text) if text.lstrip().startswith(("{", "[")) else text
    except ValueError as exc:
        raise ConfigError(name, f"cannot parse {text!r}: {exc}") from exc
    return text


def build_config(doc: dict | None = None, overrides: dict | None = None) -> RunConfig:
    """Merge preset defaults, a JSON config document and explicit overrides."""
    merged = dict(doc or {})
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    preset = merged.get("preset")
    values = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError("preset", f"unknown preset {preset!r} (known: {sorted(PRESETS)})")
        values.update(PRESETS[preset])
    values.update(merged)
    unknown = set(values) - set(FIELD_TYPES)
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown config field")
    return RunConfig(**values).validate()


def load_config_file(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError("config", f"{path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config", f"{path}: top level must be an object")
    return doc


class StageError(TgcnFaultError):
    """Wraps an error raised inside a pipeline stage."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 2)


@contextlib.contextmanager
def stage(name: str):
    log.info("stage %s", name)
    try:
        yield
    except StageError:
        raise
    except TgcnFaultError as exc:
        raise StageError(name, exc) from exc


@dataclass
class Source:
    features: np.ndarray
    labels: list
    onset: int | None = None
    fault_nodes: tuple = ()


def load_source(cfg: RunConfig) -> Source:
    if cfg.source == "synthetic":
        g = graph_from_spec(cfg.graph, cfg.synth_nodes)
        syn = generate_synthetic(
            seed=cfg.seed, n=cfg.synth_nodes, length=cfg.synth_length, onset_frac=cfg.synth_onset,
            fault_nodes=cfg.synth_fault_nodes, gain=cfg.synth_gain, fault_amp=cfg.synth_fault_amp,
            noise=cfg.synth_noise, graph=g,
        )
        return Source(syn.features, syn.labels, syn.onset, syn.fault_nodes)
    if cfg.source == "csv":
        x, labels = ingest_csv(cfg.input)
        return Source(x, labels)
    x = ingest_ims(cfg.input, cfg.channels)
    return Source(x, [f"bearing{i + 1}" for i in range(x.shape[0])])


def source_graph(cfg: RunConfig, src: Source) -> Graph:
    g = graph_from_spec(cfg.graph, src.features.shape[0])
    if g.n_nodes != src.features.shape[0]:
        raise ConfigError("graph", f"graph has {g.n_nodes} nodes, data has {src.features.shape[0]}")
    return g.with_labels(src.labels)


def fit(cfg: RunConfig, src: Source) -> tuple[TrainResult, Dataset]:
    g = source_graph(cfg, src)
    ds = normalize_dataset(src.features, cfg.window, cfg.train_frac, cfg.val_frac, g.node_labels)
    model = init_params(cfg.seed, normalize(g), cfg.window, cfg.hidden, cfg.layers)
    result = train(model, ds, cfg.epochs, cfg.batch_size, seed=cfg.seed, lr=cfg.lr,
                   clip_norm=cfg.clip_norm)
    result.model.meta = {
        "labels": list(ds.labels),
        "mean": ds.mean.tolist(),
        "std": ds.std.tolist(),
        "train_frac": cfg.train_frac,
        "val_frac": cfg.val_frac,
        "bounds": {k: list(v) for k, v in ds.bounds.items()},
    }
    return result, ds


def dataset_for(model: TgcnModel, features: np.ndarray) -> Dataset:
    """Re-apply a checkpoint's normalization and split to raw features."""
    meta = model.meta
    if not {"mean", "std", "train_frac", "val_frac"} <= meta.keys():
        raise DataError("checkpoint lacks normalization metadata")
    x = np.asarray(features, dtype=np.float64)
    if x.shape[0] != model.n_nodes:
        raise DataError(f"checkpoint expects {model.n_nodes} channels, data has {x.shape[0]}")
    mean, std = np.array(meta["mean"]), np.array(meta["std"])
    bounds = split_bounds(x.shape[1], meta["train_frac"], meta["val_frac"])
    feats = (x - mean[:, None]) / std[:, None]
    return Dataset(feats, model.window, bounds, mean, std, tuple(meta.get("labels", ())))


@dataclass
class Detection:
    train: detection.AnomalySeries
    test: detection.AnomalySeries
    threshold: np.ndarray


def detect(model: TgcnModel, ds: Dataset) -> Detection:
    train_w = make_windows(ds, "train")
    tau = detection.calibrate_threshold(model, train_w)
    train_s = detection.score(model, train_w).with_threshold(tau)
    test_s = detection.score(model, make_windows(ds, "test")).with_threshold(tau)
    return Detection(train_s, test_s, tau)


def _f(x) -> float:
    return float(x)


def summarize(cfg: RunConfig, src: Source, result: TrainResult | None, ds: Dataset,
              det: Detection) -> dict:
    labels = list(ds.labels)
    test = det.test
    flags = detection.flag(test)
    sev = severity.node_severity(test.scores, test.threshold, cfg.m)
    summary = {
        "config": cfg.echo(),
        "nodes": labels,
        "segments": {k: list(v) for k, v in ds.bounds.items()},
        "threshold": {n: _f(t) for n, t in zip(labels, det.threshold)},
        "fault_count": {n: int(c) for n, c in zip(labels, flags.sum(axis=1))},
        "train_fault_count": {n: int(c) for n, c in zip(labels, detection.flag(det.train).sum(axis=1))},
        "severity_final": {
            n: {"mu": _f(s.mu[-1]), "sigma": _f(s.sigma[-1]), "index": _f(s.index[-1])}
            for n, s in zip(labels, sev)
        },
    }
    if result is not None:
        last = result.history[-1]
        summary["training"] = {
            "epochs": len(result.history),
            "initial_train_mse": _f(result.initial_train_mse),
            "final_train_mse": _f(last[1]),
            "final_val_mse": _f(last[2]),
            "persistence_val_mse": persistence_mse(make_windows(ds, "val")),
            "converged": result.converged,
        }
    post = np.ones(len(test.times), dtype=bool)
    if src.onset is not None:
        post = test.times >= src.onset
        pre = ~post
        summary["onset"] = {
            "index": int(src.onset),
            "fault_nodes": [labels[i] for i in src.fault_nodes],
            "pre_rate": {n: _f(f[pre].mean()) if pre.any() else 0.0 for n, f in zip(labels, flags)},
            "post_rate": {n: _f(f[post].mean()) if post.any() else 0.0 for n, f in zip(labels, flags)},
        }
    summary["fluctuation"] = {
        n: severity.fluctuation(s, t, cfg.m, post)
        for n, s, t in zip(labels, test.scores, test.threshold)
    }
    return summary


@dataclass
class RunArtifacts:
    out_dir: Path
    checkpoint: Path
    loss_csv: Path
    anomaly_csv: Path
    severity_csv: Path
    summary_json: Path
    plots: dict
    summary: dict


def write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n", encoding="utf-8")


def run_pipeline(cfg: RunConfig) -> RunArtifacts:
    cfg.validate()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with stage("acquire"):
        src = load_source(cfg)
    with stage("train"):
        result, ds = fit(cfg, src)
        save_checkpoint(result.model, out / "checkpoint.json")
        (out / "loss.csv").write_text(result.loss_csv(), encoding="utf-8")
    with stage("detect"):
        det = detect(result.model, ds)
        (out / "anomaly.csv").write_text(detection.to_csv(det.test, ds.labels), encoding="utf-8")
    with stage("severity"):
        (out / "severity.csv").write_text(
            severity.to_csv(det.test, ds.labels, cfg.m), encoding="utf-8")
        summary = summarize(cfg, src, result, ds, det)
        write_json(out / "summary.json", summary)
    with stage("plot"):
        plots = render_plots(out / "anomaly.csv", out / "severity.csv", out / "plots")
    return RunArtifacts(out, out / "checkpoint.json", out / "loss.csv", out / "anomaly.csv",
                        out / "severity.csv", out / "summary.json", plots, summary)


def detect_from_checkpoint(checkpoint, features) -> tuple[Dataset, Detection]:
    model = load_checkpoint(checkpoint)
    ds = dataset_for(model, features)
    return ds, detect(model, ds)
