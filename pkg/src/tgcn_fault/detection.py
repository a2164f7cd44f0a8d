"""Prediction-error anomaly scores, per-node thresholds and fault flags."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .model import TgcnModel, predict
from .training import WindowBatch

ANOMALY_HEADER = "t,node,score,threshold,flag"


@dataclass
class AnomalySeries:
    scores: np.ndarray  # (N, T_test), squared one-step error per node
    times: np.ndarray  # (T_test,) target time index
    threshold: np.ndarray | None = None  # (N,)

    @property
    def n_nodes(self) -> int:
        return self.scores.shape[0]

    def with_threshold(self, tau) -> "AnomalySeries":
        tau = np.asarray(tau, dtype=np.float64).reshape(-1)
        if tau.shape != (self.n_nodes,):
            raise ContractError(f"threshold needs {self.n_nodes} entries, got {tau.shape}")
        return AnomalySeries(self.scores, self.times, tau)


def squared_errors(pred: np.ndarray, batch: WindowBatch) -> AnomalySeries:
    """Scores from precomputed (B, N) predictions, sorted by target time."""
    order = np.argsort(batch.times, kind="stable")
    err = (pred - batch.targets) ** 2
    return AnomalySeries(err[order].T.copy(), batch.times[order].copy())


def score(model: TgcnModel, windows: WindowBatch) -> AnomalySeries:
    if not model.trained:
        raise ContractError("model has not been trained; load a checkpoint or train first")
    return squared_errors(predict(model, windows.inputs), windows)


def calibrate_threshold(model: TgcnModel, train_windows: WindowBatch) -> np.ndarray:
    """Per-node maximum score over the training windows."""
    if len(train_windows) == 0:
        raise ContractError("threshold calibration needs at least one training window")
    tau = score(model, train_windows).scores.max(axis=1)
    if np.any(tau <= 0):
        warnings.warn(
            f"zero threshold on node(s) {np.flatnonzero(tau <= 0).tolist()}; any error will flag",
            RuntimeWarning, stacklevel=2,
        )
    return tau


def flag(series: AnomalySeries) -> np.ndarray:
    """Boolean (N, T) fault indicator, strict ``score > threshold``."""
    if series.threshold is None:
        raise ContractError("threshold not set; calibrate first")
    return series.scores > series.threshold[:, None]


def rows(series: AnomalySeries, labels):
    flags = flag(series)
    for j, t in enumerate(series.times):
        for i, label in enumerate(labels):
            yield int(t), label, float(series.scores[i, j]), float(series.threshold[i]), int(flags[i, j])


def to_csv(series: AnomalySeries, labels) -> str:
    lines = [ANOMALY_HEADER]
    lines += [f"{t},{n},{s!r},{tau!r},{f}" for t, n, s, tau, f in rows(series, labels)]
    return "\n".join(lines) + "\n"
