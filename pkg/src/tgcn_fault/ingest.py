"""Data sources: IMS raw snapshots, generic CSV, and a synthetic fault generator."""

from __future__ import annotations

import csv
import io
import logging
import re
import warnings
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .graph import Graph, graph_from_spec

log = logging.getLogger(__name__)

IMS_NAME = re.compile(r"^\d{4}\.\d{2}\.\d{2}\.\d{2}\.\d{2}\.\d{2}$")
IMS_TIME_FORMAT = "%Y.%m.%d.%H.%M.%S"


@dataclass
class IngestManifest:
    kind: str
    files: list
    channels: int
    samples: int | None = None


def rms(samples: np.ndarray) -> np.ndarray:
    """Column-wise root mean square."""
    return np.sqrt(np.mean(np.square(samples), axis=0))


def _read_snapshot(path: Path, channels: int) -> np.ndarray:
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)  # empty file, reported below
            data = np.loadtxt(path, dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc
    if data.size == 0:
        raise DataError(f"{path}: empty snapshot")
    if data.shape[1] != channels:
        raise DataError(f"{path}: {data.shape[1]} columns, expected {channels}")
    if not np.isfinite(data).all():
        raise DataError(f"{path}: non-finite samples")
    return data


def ims_manifest(directory, channels: int) -> IngestManifest:
    root = Path(directory)
    if not root.is_dir():
        raise DataError(f"{root}: not a directory")
    stamped = []
    for p in root.iterdir():
        if p.is_file() and IMS_NAME.match(p.name):
            stamped.append((datetime.strptime(p.name, IMS_TIME_FORMAT), p))
    if not stamped:
        raise DataError(f"{root}: no timestamp-named snapshot files")
    stamped.sort()
    return IngestManifest("ims-raw", [p for _, p in stamped], channels)


def ingest_ims(directory, channels: int = 4) -> np.ndarray:
    """RMS of every channel of every snapshot file, ordered by filename timestamp.

    Returns an N x T matrix with one column per file.
    """
    manifest = ims_manifest(directory, channels)
    cols = []
    for path in manifest.files:
        data = _read_snapshot(path, channels)
        if manifest.samples is None:
            manifest.samples = len(data)
        elif len(data) != manifest.samples:
            log.warning("%s: %d samples, first file had %d", path, len(data), manifest.samples)
        cols.append(rms(data))
    log.info("ingested %d IMS snapshots from %s", len(cols), directory)
    return np.column_stack(cols)


def ingest_csv(path) -> tuple[np.ndarray, list[str]]:
    """Read a header + one-row-per-step CSV; returns (N x T matrix, channel names)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from exc
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if not header or not any(h.strip() for h in header):
        raise DataError(f"{path}: missing header row")
    names = [h.strip() for h in header]
    values = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(names):
            raise DataError(f"{path}: row {lineno} has {len(row)} fields, expected {len(names)}")
        try:
            parsed = [float(v) if v.strip() else float("nan") for v in row]
        except ValueError as exc:
            raise DataError(f"{path}: row {lineno}: {exc}") from exc
        if not all(np.isfinite(parsed)):
            raise DataError(f"{path}: row {lineno}: missing or non-finite value")
        values.append(parsed)
    if not values:
        raise DataError(f"{path}: no data rows")
    return np.array(values, dtype=np.float64).T, names


def features_to_csv(x: np.ndarray, labels) -> str:
    buf = io.StringIO()
    buf.write(",".join(labels) + "\n")
    for col in np.asarray(x).T:
        buf.write(",".join(repr(float(v)) for v in col) + "\n")
    return buf.getvalue()


@dataclass
class SyntheticSeries:
    features: np.ndarray
    onset: int
    labels: list
    fault_nodes: tuple


def generate_synthetic(
    seed: int = 0,
    n: int = 4,
    length: int = 1000,
    onset_frac: float = 0.5,
    fault_nodes=(0,),
    gain: float = 1.5,
    fault_amp: float = 0.5,
    noise: float = 0.05,
    period: float = 20.0,
    graph: Graph | None = None,
) -> SyntheticSeries:
    """Graph-coupled sinusoids with a fault injected after ``onset``.

    Each node oscillates with a shared period and a phase lag to its graph
    neighbours, and mixes in half of its neighbours' mean signal. After the
    onset, faulted nodes are amplified by ``gain`` and pick up an
    oscillation of amplitude ``fault_amp`` at an unrelated frequency with a
    slowly drifting phase.
    """
    if not 0.0 < onset_frac < 1.0:
        raise ConfigError("synth_onset", f"onset fraction must lie in (0, 1), got {onset_frac}")
    if graph is None:
        graph = graph_from_spec("path4") if n == 4 else graph_from_spec({"n": n, "edges": []})
    if graph.n_nodes != n:
        raise ConfigError("graph", f"graph has {graph.n_nodes} nodes, synthetic series has {n}")
    fault_nodes = tuple(int(i) for i in fault_nodes)
    for i in fault_nodes:
        if not 0 <= i < n:
            raise ConfigError("synth_fault_nodes", f"fault node {i} out of range for {n} nodes")
    rng = np.random.default_rng(seed)
    t = np.arange(length, dtype=np.float64)
    omega = 2 * np.pi / period
    phase = 0.3 * np.arange(n)
    base = np.sin(omega * t[None, :] + phase[:, None])
    a = graph.adjacency
    deg = np.maximum(a.sum(axis=1), 1.0)
    signal = base + 0.5 * (a @ base) / deg[:, None]
    onset = int(round(onset_frac * length))
    if fault_nodes and (gain != 1.0 or fault_amp != 0.0):
        drift = np.cumsum(rng.normal(0.0, 0.2, size=length - onset))
        osc = fault_amp * np.sin(2 * np.pi * t[onset:] / (0.37 * period) + drift)
        for i in fault_nodes:
            signal[i, onset:] = gain * signal[i, onset:] + osc
    signal = signal + rng.normal(0.0, noise, size=signal.shape)
    return SyntheticSeries(signal, onset, list(graph.node_labels), fault_nodes)
