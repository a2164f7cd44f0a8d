"""Sensor graphs and their symmetric normalization."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

PRESETS = {
    # four bearings on one shaft, only neighbours coupled
    "path4": (4, [(0, 1), (1, 2), (2, 3)]),
    # fanjet vibration magnitude <-> rpm
    "pair2": (2, [(0, 1)]),
}


@dataclass(frozen=True)
class Graph:
    adjacency: np.ndarray
    node_labels: tuple = ()

    def __post_init__(self):
        a = np.asarray(self.adjacency, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ConfigError("graph", f"adjacency must be a non-empty square matrix, got {a.shape}")
        if not np.isin(a, (0.0, 1.0)).all():
            raise ConfigError("graph", "adjacency entries must be 0 or 1")
        if not np.array_equal(a, a.T):
            raise ConfigError("graph", "adjacency must be symmetric")
        if np.any(np.diag(a) != 0):
            raise ConfigError("graph", "adjacency must have a zero diagonal")
        a.setflags(write=False)
        object.__setattr__(self, "adjacency", a)
        labels = tuple(self.node_labels) or tuple(f"node{i}" for i in range(a.shape[0]))
        if len(labels) != a.shape[0]:
            raise ConfigError("graph", f"{len(labels)} labels for {a.shape[0]} nodes")
        object.__setattr__(self, "node_labels", labels)

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]

    def with_labels(self, labels) -> "Graph":
        return Graph(self.adjacency, tuple(labels))


@dataclass(frozen=True)
class NormalizedGraph:
    a_hat: np.ndarray
    degree: np.ndarray = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return self.a_hat.shape[0]


def add_self_loops(g: Graph) -> np.ndarray:
    return g.adjacency + np.eye(g.n_nodes)


def normalize(g: Graph) -> NormalizedGraph:
    """D^-1/2 (A + I) D^-1/2 with D the degree matrix of A + I."""
    a_tilde = add_self_loops(g)
    degree = a_tilde.sum(axis=1)
    a_hat = a_tilde / np.sqrt(np.outer(degree, degree))
    a_hat.setflags(write=False)
    degree.setflags(write=False)
    return NormalizedGraph(a_hat, degree)


def from_edges(n: int, edges, labels=()) -> Graph:
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ConfigError("graph.n", f"node count must be a positive integer, got {n!r}")
    a = np.zeros((n, n))
    for edge in edges:
        if len(edge) != 2:
            raise ConfigError("graph.edges", f"edge {edge!r} is not a pair")
        i, j = (int(v) for v in edge)
        if not (0 <= i < n and 0 <= j < n):
            raise ConfigError("graph.edges", f"edge ({i}, {j}) out of range for n={n}")
        if i == j:
            raise ConfigError("graph.edges", f"self-loop ({i}, {i}) is not allowed")
        a[i, j] = a[j, i] = 1.0
    return Graph(a, tuple(labels))


def graph_from_spec(spec, n: int | None = None) -> Graph:
    """Build a graph from a preset name or a config mapping.

    Accepted forms: ``"path4"``, ``{"preset": "pair2"}``,
    ``{"n": 3, "edges": [[0, 2]]}`` or ``{"adjacency": [[0, 1], [1, 0]]}``.
    """
    if isinstance(spec, str):
        spec = {"preset": spec}
    if not isinstance(spec, dict):
        raise ConfigError("graph", f"expected a preset name or mapping, got {spec!r}")
    labels = spec.get("labels", ())
    if "preset" in spec:
        name = spec["preset"]
        if name not in PRESETS:
            raise ConfigError("graph.preset", f"unknown preset {name!r} (known: {sorted(PRESETS)})")
        size, edges = PRESETS[name]
        if n is not None and n != size:
            raise ConfigError("graph.preset", f"preset {name!r} has {size} nodes, data has {n}")
        return from_edges(size, edges, labels)
    if "adjacency" in spec:
        return Graph(np.asarray(spec["adjacency"], dtype=np.float64), tuple(labels))
    size = spec.get("n", n)
    if size is None:
        raise ConfigError("graph.n", "node count is required with an edge list")
    return from_edges(size, spec.get("edges", []), labels)
