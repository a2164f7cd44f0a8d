"""Per-node SVG figures: anomaly score, threshold, flagged points, severity curves."""

from __future__ import annotations

from collections import OrderedDict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .detection import ANOMALY_HEADER  # noqa: E402
from .severity import SEVERITY_HEADER  # noqa: E402
from .tables import read_table  # noqa: E402

STYLE = {
    "svg.fonttype": "none",
    "svg.hashsalt": "tgcn-fault",
    "figure.figsize": (7.0, 3.6),
    "axes.labelsize": 10,
    "axes.titlesize": 11,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
}


def plot_node(ax, label, anomaly: dict, severity: dict | None = None):
    """Draw one node's panel; returns the threshold line artist."""
    t, s = anomaly["t"], anomaly["score"]
    ax.plot(t, s, color="black", lw=0.9, label="anomaly score", gid="score")
    tau = float(anomaly["threshold"][0]) if len(anomaly["threshold"]) else 0.0
    line = ax.axhline(tau, color="green", lw=1.2, label="threshold", gid="threshold")
    hit = anomaly["flag"] > 0
    if hit.any():
        ax.plot(t[hit], s[hit], "o", color="red", ms=2.5, label="detected fault", gid="flags")
    if severity is not None and len(severity["t"]):
        ax.plot(severity["t"], severity["mu"], color="blue", lw=1.2, label=r"$\mu$", gid="mu")
        ax.plot(severity["t"], severity["index"], color="blue", ls="--", lw=1.2,
                label=r"$\mu + m\sigma$", gid="index")
    ax.set_title(label)
    ax.set_xlabel("time index")
    ax.set_ylabel("score")
    ax.legend(loc="upper left", frameon=False)
    return line


def render_plots(anomaly_csv, severity_csv, out_dir) -> dict[str, Path]:
    """One SVG per node under ``out_dir``; returns label -> path."""
    anomaly = read_table(anomaly_csv, ANOMALY_HEADER)
    severity = read_table(severity_csv, SEVERITY_HEADER) if severity_csv else OrderedDict()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = {}
    with plt.rc_context(STYLE):
        for i, (label, cols) in enumerate(anomaly.items()):
            fig, ax = plt.subplots()
            plot_node(ax, label, cols, severity.get(label))
            fig.tight_layout()
            path = out / f"node{i}_{_slug(label)}.svg"
            fig.savefig(path, format="svg", metadata={"Date": None})
            plt.close(fig)
            written[label] = path
    return written


def _slug(label: str) -> str:
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in label)
