"""Fault detection and severity estimation for multivariate vibration data.

A temporal graph convolutional forecaster is trained on healthy data; its
one-step prediction error is the anomaly score, the largest training error
per node is the threshold, and a cumulative mean/std of threshold
exceedances gives a smoothed severity index.
"""

from .detection import AnomalySeries, calibrate_threshold, flag, score
from .errors import (
    ConfigError,
    ContractError,
    DataError,
    ShapeError,
    TgcnFaultError,
    TrainingDivergence,
)
from .graph import Graph, NormalizedGraph, add_self_loops, graph_from_spec, normalize
from .model import TgcnModel, forward, init_params, load_checkpoint, predict, save_checkpoint
from .severity import SeverityState, batch_severity, streaming_severity
from .training import Adam, Dataset, make_windows, mse_loss, normalize_dataset, train

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "AnomalySeries",
    "ConfigError",
    "ContractError",
    "DataError",
    "Dataset",
    "Graph",
    "NormalizedGraph",
    "SeverityState",
    "ShapeError",
    "TgcnFaultError",
    "TgcnModel",
    "TrainingDivergence",
    "add_self_loops",
    "batch_severity",
    "calibrate_threshold",
    "flag",
    "forward",
    "graph_from_spec",
    "init_params",
    "load_checkpoint",
    "make_windows",
    "mse_loss",
    "normalize",
    "normalize_dataset",
    "predict",
    "save_checkpoint",
    "score",
    "streaming_severity",
    "train",
]
