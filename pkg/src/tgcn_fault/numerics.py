"""Dense float64 matrices with define-by-run reverse-mode differentiation.

Every value is a 2-D ``numpy.ndarray`` of dtype float64. Operations on
:class:`Node` objects record themselves on the owning :class:`Tape`; calling
:func:`backward` walks the tape in reverse and accumulates adjoints.

    >>> tape = Tape()
    >>> w = tape.param("w", np.zeros((1, 1)))
    >>> grads = backward(tape, sigmoid(w))
    >>> float(grads["w"][0, 0])
    0.25
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ContractError, ShapeError

__all__ = [
    "Node",
    "Tape",
    "as_matrix",
    "matmul",
    "graph_matmul",
    "add",
    "sub",
    "hadamard",
    "add_bias",
    "scale",
    "sigmoid",
    "tanh",
    "concat_features",
    "transpose",
    "reduce_mean",
    "reduce_max",
    "backward",
    "gradients",
    "grad_check",
    "GradCheckReport",
]


def as_matrix(value) -> np.ndarray:
    """Coerce ``value`` to a 2-D float64 array (scalars become 1x1)."""
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ShapeError(f"expected a matrix, got array with shape {arr.shape}")
    return arr


class Node:
    """One recorded value on a tape."""

    __slots__ = ("tape", "index", "value", "parents", "vjp", "name", "requires_grad")

    def __init__(self, tape, value, parents=(), vjp=None, name=None, requires_grad=False):
        self.tape = tape
        self.value = value
        self.parents = parents
        self.vjp = vjp
        self.name = name
        self.requires_grad = requires_grad
        self.index = len(tape.nodes)
        tape.nodes.append(self)

    @property
    def shape(self):
        return self.value.shape

    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return hadamard(self, other)

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"<Node#{self.index}{label} shape={self.shape}>"


class Tape:
    """Ordered record of primitive operations.

    Nodes are appended as they are created, so inputs always precede the
    nodes that consume them. ``adjoints`` is filled by :func:`backward`.
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self.params: dict[str, Node] = {}
        self.adjoints: list[np.ndarray | None] = []

    def param(self, name: str, value) -> Node:
        if name in self.params:
            raise ContractError(f"parameter {name!r} registered twice")
        node = Node(self, as_matrix(value).copy(), name=name, requires_grad=True)
        self.params[name] = node
        return node

    def const(self, value, name=None) -> Node:
        return Node(self, as_matrix(value), name=name)

    def adjoint(self, node: Node) -> np.ndarray:
        """Accumulated gradient of the last loss w.r.t. ``node`` (zero if unused)."""
        adj = self.adjoints[node.index] if node.index < len(self.adjoints) else None
        return np.zeros_like(node.value) if adj is None else adj


def _record(value, parents, vjp):
    tape = parents[0].tape
    for p in parents[1:]:
        if p.tape is not tape:
            raise ContractError("operands belong to different tapes")
    needs = any(p.requires_grad for p in parents)
    return Node(tape, value, parents, vjp if needs else None, requires_grad=needs)


def _same_shape(op, a, b):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


def matmul(a: Node, b: Node) -> Node:
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    av, bv = a.value, b.value
    return _record(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def graph_matmul(a_hat: np.ndarray, x: Node) -> Node:
    """Apply ``a_hat`` (N x N, constant) to every N-row block of ``x``.

    ``x`` stacks B graphs vertically (B*N rows); the result equals
    ``kron(I_B, a_hat) @ x`` without materializing the block-diagonal matrix.
    """
    n = a_hat.shape[0]
    rows, cols = x.shape
    if a_hat.shape != (n, n) or rows % n:
        raise ShapeError(f"graph_matmul: {a_hat.shape} does not tile {x.shape}")
    blocks = rows // n

    def mix(m, v):
        return np.matmul(m, v.reshape(blocks, n, cols)).reshape(rows, cols)

    return _record(mix(a_hat, x.value), (x,), lambda g: (mix(a_hat.T, g),))


def add(a: Node, b: Node) -> Node:
    _same_shape("add", a, b)
    return _record(a.value + b.value, (a, b), lambda g: (g, g))


def sub(a: Node, b: Node) -> Node:
    _same_shape("sub", a, b)
    return _record(a.value - b.value, (a, b), lambda g: (g, -g))


def hadamard(a: Node, b: Node) -> Node:
    _same_shape("hadamard", a, b)
    av, bv = a.value, b.value
    return _record(av * bv, (a, b), lambda g: (g * bv, g * av))


def add_bias(a: Node, bias: Node) -> Node:
    """Add a 1 x C row vector to every row of an R x C matrix."""
    if bias.shape != (1, a.shape[1]):
        raise ShapeError(f"add_bias: bias {bias.shape} does not match {a.shape}")
    return _record(a.value + bias.value, (a, bias), lambda g: (g, g.sum(axis=0, keepdims=True)))


def scale(a: Node, c: float) -> Node:
    return _record(a.value * c, (a,), lambda g: (g * c,))


def _stable_sigmoid(x):
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def sigmoid(a: Node) -> Node:
    s = _stable_sigmoid(a.value)
    return _record(s, (a,), lambda g: (g * s * (1.0 - s),))


def tanh(a: Node) -> Node:
    t = np.tanh(a.value)
    return _record(t, (a,), lambda g: (g * (1.0 - t * t),))


def concat_features(a: Node, b: Node) -> Node:
    """Stack ``a`` and ``b`` side by side (column axis)."""
    if a.shape[0] != b.shape[0]:
        raise ShapeError(f"concat_features: row counts of {a.shape} and {b.shape} differ")
    k = a.shape[1]
    return _record(np.hstack([a.value, b.value]), (a, b), lambda g: (g[:, :k], g[:, k:]))


def transpose(a: Node) -> Node:
    return _record(a.value.T.copy(), (a,), lambda g: (g.T,))


def reduce_mean(a: Node) -> Node:
    size = a.value.size
    shape = a.shape
    return _record(
        np.array([[a.value.mean()]]), (a,), lambda g: (np.full(shape, g[0, 0] / size),)
    )


def reduce_max(a: Node) -> Node:
    flat = int(np.argmax(a.value))
    shape = a.shape

    def vjp(g):
        out = np.zeros(shape)
        out.flat[flat] = g[0, 0]
        return (out,)

    return _record(np.array([[a.value.flat[flat]]]), (a,), vjp)


def backward(tape: Tape, loss: Node) -> dict[str, np.ndarray]:
    """Reverse sweep from a scalar ``loss``; returns gradients of every parameter."""
    if loss.tape is not tape:
        raise ContractError("loss node belongs to a different tape")
    if loss.shape != (1, 1):
        raise ContractError(f"backward needs a scalar (1x1) loss, got {loss.shape}")
    adj: list[np.ndarray | None] = [None] * len(tape.nodes)
    adj[loss.index] = np.ones((1, 1))
    for node in reversed(tape.nodes[: loss.index + 1]):
        g = adj[node.index]
        if g is None or node.vjp is None:
            continue
        for parent, pg in zip(node.parents, node.vjp(g)):
            if not parent.requires_grad:
                continue
            if adj[parent.index] is None:
                adj[parent.index] = pg
            else:
                adj[parent.index] = adj[parent.index] + pg
    tape.adjoints = adj
    return {name: tape.adjoint(node) for name, node in tape.params.items()}


LossBuilder = Callable[[Tape, dict], Node]


def _evaluate(f: LossBuilder, params: dict[str, np.ndarray]):
    tape = Tape()
    nodes = {name: tape.param(name, value) for name, value in params.items()}
    return tape, f(tape, nodes)


def gradients(f: LossBuilder, params: dict[str, np.ndarray]):
    """Value and tape gradients of ``f(tape, param_nodes)`` at ``params``."""
    tape, loss = _evaluate(f, params)
    return float(loss.value[0, 0]), backward(tape, loss)


@dataclass
class GradCheckReport:
    max_rel_error: dict[str, float] = field(default_factory=dict)
    tol: float = 1e-5

    @property
    def failures(self) -> list[str]:
        return [k for k, v in self.max_rel_error.items() if not v <= self.tol]

    @property
    def passed(self) -> bool:
        return not self.failures

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)


def grad_check(
    f: LossBuilder,
    params: dict[str, np.ndarray],
    step: float = 1e-5,
    tol: float = 1e-5,
    analytic: dict[str, np.ndarray] | None = None,
    floor: float = 1e-4,
) -> GradCheckReport:
    """Compare tape gradients with central finite differences, entry by entry.

    The error of one entry is ``|a - n| / max(|a|, |n|, floor)``; ``floor``
    turns the check absolute (at ``tol * floor``) for gradients so small
    that central-difference rounding noise, about eps * |f| / step, dominates.
    ``analytic`` overrides the tape gradients (used to plant faults).
    """
    if step <= 0:
        raise ContractError("step must be positive")
    params = {k: as_matrix(v).copy() for k, v in params.items()}
    if analytic is None:
        _, analytic = gradients(f, params)
    report = GradCheckReport(tol=tol)
    for name, value in params.items():
        worst = 0.0
        for idx in np.ndindex(value.shape):
            orig = value[idx]
            value[idx] = orig + step
            up = float(_evaluate(f, params)[1].value[0, 0])
            value[idx] = orig - step
            down = float(_evaluate(f, params)[1].value[0, 0])
            value[idx] = orig
            numeric = (up - down) / (2.0 * step)
            a = float(analytic[name][idx])
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            worst = max(worst, err)
        report.max_rel_error[name] = worst
    return report
