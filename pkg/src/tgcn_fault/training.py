"""Preprocessing, window construction, and the Adam/MSE training loop."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import numerics as nx
from .errors import ContractError, ShapeError, TrainingDivergence
from .model import TgcnModel, build_forward, predict

log = logging.getLogger(__name__)

SEGMENTS = ("train", "val", "test")


@dataclass
class Dataset:
    """Normalized N x T features with chronological split boundaries.

    ``bounds[name]`` is the half-open time range of that segment.
    """

    features: np.ndarray
    window: int
    bounds: dict[str, tuple[int, int]]
    mean: np.ndarray
    std: np.ndarray
    labels: tuple = ()

    @property
    def n_nodes(self) -> int:
        return self.features.shape[0]

    def segment(self, name: str) -> np.ndarray:
        lo, hi = self.bounds[name]
        return self.features[:, lo:hi]


def split_bounds(length: int, train_frac: float, val_frac: float) -> dict[str, tuple[int, int]]:
    """Contiguous train / validation / test ranges; validation is the tail of the training share."""
    for name, frac in (("train_frac", train_frac), ("val_frac", val_frac)):
        if not 0.0 < frac < 1.0:
            raise ContractError(f"{name} must lie in (0, 1), got {frac}")
    n_fit = int(round(length * train_frac))
    n_val = int(round(n_fit * val_frac))
    return {"train": (0, n_fit - n_val), "val": (n_fit - n_val, n_fit), "test": (n_fit, length)}


def normalize_dataset(raw, window: int, train_frac: float, val_frac: float, labels=()) -> Dataset:
    """Z-score every channel with statistics of the train segment only."""
    x = np.asarray(raw, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"features must be N x T, got {x.shape}")
    if x.shape[1] < window + 2:
        raise ContractError(f"series length {x.shape[1]} too short for window {window}")
    bounds = split_bounds(x.shape[1], train_frac, val_frac)
    lo, hi = bounds["train"]
    if hi - lo < 1:
        raise ContractError("train segment is empty")
    train = x[:, lo:hi]
    mean = train.mean(axis=1)
    std = train.std(axis=1)
    flat = std < 1e-8
    if flat.any():
        warnings.warn(
            f"constant channel(s) {np.flatnonzero(flat).tolist()} in train segment; dividing by 1",
            RuntimeWarning, stacklevel=2,
        )
        std = np.where(flat, 1.0, std)
        mean = np.where(flat, train[:, 0], mean)
    feats = (x - mean[:, None]) / std[:, None]
    return Dataset(feats, window, bounds, mean, std, tuple(labels))


@dataclass
class WindowBatch:
    inputs: np.ndarray  # (B, w, N)
    targets: np.ndarray  # (B, N)
    times: np.ndarray  # (B,) time index of each target

    def __len__(self):
        return len(self.targets)

    def take(self, idx) -> "WindowBatch":
        return WindowBatch(self.inputs[idx], self.targets[idx], self.times[idx])

    def batches(self, size: int):
        for start in range(0, len(self), size):
            yield self.take(slice(start, start + size))


def make_windows(ds: Dataset, segment: str, seed: int | None = None) -> WindowBatch:
    """Stride-1 windows that stay inside one segment.

    With a ``seed`` the windows are shuffled; otherwise they are in time order.
    """
    if segment not in SEGMENTS:
        raise ContractError(f"unknown segment {segment!r}")
    lo, hi = ds.bounds[segment]
    w = ds.window
    count = hi - lo - w
    if count < 1:
        raise ContractError(f"{segment} segment has {hi - lo} steps, needs more than window {w}")
    x = ds.features
    starts = np.arange(lo, lo + count)
    inputs = np.stack([x[:, s:s + w].T for s in starts])
    targets = x[:, starts + w].T.copy()
    batch = WindowBatch(inputs, targets, starts + w)
    if seed is not None:
        batch = batch.take(np.random.default_rng(seed).permutation(count))
    return batch


def mse_loss(pred: nx.Node, target: nx.Node) -> nx.Node:
    diff = pred - target
    return nx.reduce_mean(diff * diff)


def persistence_mse(batch: WindowBatch) -> float:
    """MSE of predicting each target with the last value of its window."""
    return float(np.mean((batch.inputs[:, -1, :] - batch.targets) ** 2))


class Adam:
    """Bias-corrected Adam over a dict of parameter arrays."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict, grads: dict) -> dict:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        out = {}
        for name, p in params.items():
            g = grads[name]
            if g.shape != p.shape:
                raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
            m = self.m[name] = b1 * self.m.get(name, 0.0) + (1 - b1) * g
            v = self.v[name] = b2 * self.v.get(name, 0.0) + (1 - b2) * g * g
            m_hat = m / (1 - b1 ** self.t)
            v_hat = v / (1 - b2 ** self.t)
            out[name] = p - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return out


def batch_loss(model: TgcnModel, batch: WindowBatch):
    """Tape, parameter nodes and MSE node for one batch."""
    tape = nx.Tape()
    nodes = {k: tape.param(k, v) for k, v in model.params.items()}
    pred = build_forward(model, tape, nodes, batch.inputs)
    target = tape.const(batch.targets.reshape(-1, 1))
    return tape, mse_loss(pred, target)


def evaluate_mse(model: TgcnModel, batch: WindowBatch) -> float:
    return float(np.mean((predict(model, batch.inputs) - batch.targets) ** 2))


def _clip(grads, max_norm):
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total <= max_norm:
        return grads
    return {k: g * (max_norm / total) for k, g in grads.items()}


@dataclass
class TrainResult:
    model: TgcnModel
    history: list[tuple[int, float, float]] = field(default_factory=list)
    initial_train_mse: float = float("nan")
    initial_val_mse: float = float("nan")
    converged: bool = False

    def loss_csv(self) -> str:
        rows = ["epoch,train_mse,val_mse"]
        rows += [f"{e},{tr!r},{va!r}" for e, tr, va in self.history]
        return "\n".join(rows) + "\n"


def has_converged(losses, span=5, rel=0.01) -> bool:
    """Relative change of train loss across the last ``span`` epochs below ``rel``."""
    if len(losses) < span + 1:
        return False
    old, new = losses[-span - 1], losses[-1]
    return abs(old - new) <= rel * max(abs(old), 1e-12)


def train(
    model: TgcnModel,
    ds: Dataset,
    epochs: int,
    batch_size: int,
    seed: int = 0,
    lr: float = 1e-3,
    clip_norm: float | None = None,
) -> TrainResult:
    """Fixed-epoch Adam loop; one optimizer step per mini-batch.

    Windows are reshuffled each epoch from ``seed``; the last partial batch
    is kept. Returns a trained copy of ``model``.
    """
    if epochs < 1:
        raise ContractError(f"epochs must be >= 1, got {epochs}")
    if batch_size < 1:
        raise ContractError(f"batch_size must be >= 1, got {batch_size}")
    model = model.copy()
    train_w = make_windows(ds, "train")
    val_w = make_windows(ds, "val")
    result = TrainResult(model)
    result.initial_train_mse = evaluate_mse(model, train_w)
    result.initial_val_mse = evaluate_mse(model, val_w)
    opt = Adam(lr=lr)
    rng = np.random.default_rng(seed)
    for epoch in range(1, epochs + 1):
        order = train_w.take(rng.permutation(len(train_w)))
        total = 0.0
        for b, batch in enumerate(order.batches(batch_size)):
            tape, loss = batch_loss(model, batch)
            value = float(loss.value[0, 0])
            if not np.isfinite(value):
                raise TrainingDivergence(epoch, b, value)
            grads = nx.backward(tape, loss)
            if clip_norm is not None:
                grads = _clip(grads, clip_norm)
            model.params = opt.step(model.params, grads)
            total += value * len(batch)
        train_mse = total / len(train_w)
        val_mse = evaluate_mse(model, val_w)
        if not np.isfinite(val_mse):
            raise TrainingDivergence(epoch, "validation", val_mse)
        result.history.append((epoch, train_mse, val_mse))
        log.info("epoch %d train_mse=%.6g val_mse=%.6g", epoch, train_mse, val_mse)
    model.trained = True
    result.converged = has_converged([h[1] for h in result.history])
    return result
