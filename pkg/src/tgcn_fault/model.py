"""Two-layer T-GCN one-step-ahead forecaster.

Each recurrent layer convolves its per-step input over the sensor graph,
``sigmoid(A_hat X W)``, and feeds the result to a GRU cell whose gates all
see the same convolved features. Layer 2 consumes layer 1's hidden states.
A linear readout shared by all nodes maps the last hidden state to one
prediction per node.

Windows are batched by stacking B graphs vertically, so every hidden state
is a (B*N) x H matrix.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import numerics as nx
from .errors import ContractError, DataError, ShapeError
from .graph import NormalizedGraph

CHECKPOINT_FORMAT = "tgcn-fault-checkpoint"

GRU_WEIGHTS = ("w_update", "w_reset", "w_cand")
GRU_BIASES = ("b_update", "b_reset", "b_cand")


@dataclass
class TgcnModel:
    a_hat: np.ndarray
    window: int
    hidden: int
    layers: int
    params: dict[str, np.ndarray]
    seed: int = 0
    trained: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return self.a_hat.shape[0]

    def copy(self) -> "TgcnModel":
        return TgcnModel(
            self.a_hat.copy(), self.window, self.hidden, self.layers,
            {k: v.copy() for k, v in self.params.items()},
            self.seed, self.trained, json.loads(json.dumps(self.meta)),
        )


def param_shapes(hidden: int, layers: int, n_features: int = 1) -> dict[str, tuple]:
    """Parameter names and shapes in checkpoint order."""
    shapes = {}
    f_in = n_features
    for layer in range(1, layers + 1):
        p = f"layer{layer}"
        shapes[f"{p}.gcn.weight"] = (f_in, hidden)
        for w in GRU_WEIGHTS:
            shapes[f"{p}.gru.{w}"] = (2 * hidden, hidden)
        for b in GRU_BIASES:
            shapes[f"{p}.gru.{b}"] = (1, hidden)
        f_in = hidden
    shapes["readout.weight"] = (hidden, 1)
    shapes["readout.bias"] = (1, 1)
    return shapes


def init_params(seed: int, graph: NormalizedGraph, window: int, hidden: int, layers: int = 2) -> TgcnModel:
    """Glorot-uniform weights, zero biases, drawn from ``default_rng(seed)``."""
    for name, v in (("window", window), ("hidden", hidden), ("layers", layers)):
        if v < 1:
            raise ContractError(f"{name} must be positive, got {v}")
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(hidden, layers).items():
        if name.endswith("bias") or ".b_" in name:
            params[name] = np.zeros(shape)
        else:
            bound = np.sqrt(6.0 / (shape[0] + shape[1]))
            params[name] = rng.uniform(-bound, bound, size=shape)
    a_hat = np.array(graph.a_hat if isinstance(graph, NormalizedGraph) else graph, dtype=np.float64)
    return TgcnModel(a_hat, window, hidden, layers, params, seed=seed)


def gcn_apply(a_hat: np.ndarray, x: nx.Node, weight: nx.Node) -> nx.Node:
    """sigmoid(A_hat x W) for every graph stacked in ``x``."""
    if x.shape[1] != weight.shape[0]:
        raise ShapeError(f"gcn: input {x.shape} does not match weight {weight.shape}")
    return nx.sigmoid(nx.graph_matmul(a_hat, x @ weight))


@dataclass
class GateTrace:
    update: np.ndarray
    reset: np.ndarray
    cand: np.ndarray


def gru_step(cell: dict, gcn_out: nx.Node, h_prev: nx.Node, trace: list | None = None) -> nx.Node:
    """One GRU update; ``cell`` maps w_update/.../b_cand to tape nodes."""
    if gcn_out.shape[0] != h_prev.shape[0]:
        raise ShapeError(f"gru: rows of {gcn_out.shape} and {h_prev.shape} differ")
    joint = nx.concat_features(gcn_out, h_prev)
    u = nx.sigmoid(nx.add_bias(joint @ cell["w_update"], cell["b_update"]))
    r = nx.sigmoid(nx.add_bias(joint @ cell["w_reset"], cell["b_reset"]))
    gated = nx.concat_features(gcn_out, r * h_prev)
    c = nx.tanh(nx.add_bias(gated @ cell["w_cand"], cell["b_cand"]))
    if trace is not None:
        trace.append(GateTrace(u.value, r.value, c.value))
    # u*h + (1-u)*c, written with one fewer primitive
    return c + u * (h_prev - c)


def _as_windows(model: TgcnModel, windows) -> np.ndarray:
    w = np.asarray(windows, dtype=np.float64)
    if w.ndim == 2:
        w = w[None]
    if w.ndim != 3 or w.shape[2] != model.n_nodes:
        raise ShapeError(f"windows must be (B, w, {model.n_nodes}), got {np.shape(windows)}")
    if w.shape[1] != model.window:
        raise ContractError(f"window length {w.shape[1]} != configured {model.window}")
    return w


def build_forward(model: TgcnModel, tape: nx.Tape, nodes: dict, windows, trace=None) -> nx.Node:
    """Record the forward pass for a (B, w, N) batch; returns a (B*N) x 1 node."""
    w = _as_windows(model, windows)
    batch, steps, n = w.shape
    hidden = [tape.const(np.zeros((batch * n, model.hidden))) for _ in range(model.layers)]
    for t in range(steps):
        x = tape.const(w[:, t, :].reshape(batch * n, 1))
        for layer in range(1, model.layers + 1):
            p = f"layer{layer}"
            cell = {k: nodes[f"{p}.gru.{k}"] for k in GRU_WEIGHTS + GRU_BIASES}
            g = gcn_apply(model.a_hat, x, nodes[f"{p}.gcn.weight"])
            x = hidden[layer - 1] = gru_step(cell, g, hidden[layer - 1], trace)
    return nx.add_bias(hidden[-1] @ nodes["readout.weight"], nodes["readout.bias"])


def predict(model: TgcnModel, windows, chunk: int = 512) -> np.ndarray:
    """Predictions for a (B, w, N) stack of windows, shape (B, N)."""
    w = _as_windows(model, windows)
    out = []
    for start in range(0, len(w), chunk):
        part = w[start:start + chunk]
        tape = nx.Tape()
        nodes = {k: tape.const(v) for k, v in model.params.items()}
        out.append(build_forward(model, tape, nodes, part).value.reshape(len(part), model.n_nodes))
    if not out:
        return np.zeros((0, model.n_nodes))
    return np.vstack(out)


def forward(model: TgcnModel, window) -> np.ndarray:
    """Predict the step after a single w x N window; returns N x 1."""
    w = np.asarray(window, dtype=np.float64)
    if w.ndim != 2:
        raise ShapeError(f"forward takes one (w, N) window, got {w.shape}")
    return predict(model, w[None]).reshape(model.n_nodes, 1)


def save_checkpoint(model: TgcnModel, path) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": 1,
        "dims": {
            "n_nodes": model.n_nodes,
            "window": model.window,
            "hidden": model.hidden,
            "layers": model.layers,
        },
        "seed": model.seed,
        "trained": model.trained,
        "a_hat": model.a_hat.tolist(),
        "params": [
            {"name": k, "shape": list(v.shape), "data": v.ravel().tolist()}
            for k, v in model.params.items()
        ],
        "meta": model.meta,
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def load_checkpoint(path) -> TgcnModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: cannot read checkpoint ({exc})") from exc
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise DataError(f"{path}: not a checkpoint file")
    dims = doc["dims"]
    expected = param_shapes(dims["hidden"], dims["layers"])
    params = {}
    for entry in doc["params"]:
        shape = tuple(entry["shape"])
        if expected.get(entry["name"]) != shape:
            raise DataError(f"{path}: unexpected parameter {entry['name']} {shape}")
        params[entry["name"]] = np.array(entry["data"], dtype=np.float64).reshape(shape)
    if params.keys() != expected.keys():
        raise DataError(f"{path}: missing parameters {sorted(expected.keys() - params.keys())}")
    return TgcnModel(
        np.array(doc["a_hat"], dtype=np.float64), dims["window"], dims["hidden"], dims["layers"],
        params, seed=doc["seed"], trained=doc["trained"], meta=doc.get("meta", {}),
    )
