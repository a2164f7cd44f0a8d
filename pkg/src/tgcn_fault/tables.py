"""Reading the delimited report tables back in."""

from __future__ import annotations

import csv
from collections import OrderedDict

import numpy as np

from .detection import ANOMALY_HEADER, AnomalySeries
from .errors import DataError


def read_table(path, header: str) -> "OrderedDict[str, dict]":
    """Parse an anomaly or severity CSV into per-node column arrays.

    Node order follows first appearance. Errors carry the 1-based line number.
    """
    expected = header.split(",")
    nodes: OrderedDict[str, dict] = OrderedDict()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        head = next(reader, None)
        if head != expected:
            raise DataError(f"{path}:1: expected header {header!r}, got {head!r}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(expected):
                raise DataError(f"{path}:{lineno}: expected {len(expected)} fields, got {len(row)}")
            rec = dict(zip(expected, row))
            try:
                vals = {k: float(v) for k, v in rec.items() if k != "node"}
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            cols = nodes.setdefault(rec["node"], {k: [] for k in expected if k != "node"})
            for k, v in vals.items():
                cols[k].append(v)
    return OrderedDict((n, {k: np.array(v) for k, v in cols.items()}) for n, cols in nodes.items())


def read_anomaly_series(path) -> tuple[AnomalySeries, list[str]]:
    """Rebuild an :class:`AnomalySeries` (with thresholds) from an anomaly CSV."""
    table = read_table(path, ANOMALY_HEADER)
    if not table:
        raise DataError(f"{path}: no rows")
    labels = list(table)
    times = table[labels[0]]["t"]
    for label in labels[1:]:
        if not np.array_equal(table[label]["t"], times):
            raise DataError(f"{path}: node {label} is not aligned in time with {labels[0]}")
    scores = np.vstack([table[n]["score"] for n in labels])
    tau = np.array([table[n]["threshold"][0] for n in labels])
    return AnomalySeries(scores, times.astype(int), tau), labels
