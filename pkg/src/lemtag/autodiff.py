"""Dense float64 arrays with reverse-mode automatic differentiation.

A Graph is a flat tape of Nodes recorded in creation order, which is already
a topological order, so the backward pass is a single reversed sweep. Ops are
module-level functions that append Nodes; parameters enter a graph through
``Graph.leaf`` which caches on array identity so a weight bound twice shares
one gradient accumulator.

Also hosts the training primitives shared by both models: LSTM cells and a
bidirectional runner, Adam with bias correction, global-norm gradient
clipping, and inverted dropout.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FLOAT = np.float64


def set_float_dtype(name: str) -> None:
    """Switch the default numeric type ("float64" or "float32")."""
    global FLOAT
    if name not in ("float64", "float32"):
        raise ValueError(f"unsupported dtype {name!r}")
    FLOAT = getattr(np, name)


class GraphError(Exception):
    pass


class NumericalError(GraphError):
    """A non-finite value appeared during evaluation."""


class Node:
    """One tape entry: op kind, parent nodes, cached output value."""

    __slots__ = ("op", "value", "parents", "bwd", "grad", "name")

    def __init__(self, op, value, parents=(), bwd=None, name=None):
        self.op = op
        self.value = value
        self.parents = parents
        self.bwd = bwd
        self.grad = None
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        label = self.name or self.op
        return f"Node({label}, shape={self.value.shape})"


class Graph:
    """Tape of nodes in creation (= topological) order."""

    def __init__(self):
        self.nodes: list[Node] = []
        self._leaves: dict[int, Node] = {}

    def _push(self, node: Node) -> Node:
        self.nodes.append(node)
        return node

    def leaf(self, array: np.ndarray, name: str | None = None) -> Node:
        """Bind a parameter array; repeat binds return the same node."""
        node = self._leaves.get(id(array))
        if node is None:
            node = self._push(Node("leaf", array, name=name))
            self._leaves[id(array)] = node
        return node

    def constant(self, array, name: str | None = None) -> Node:
        return self._push(Node("const", np.asarray(array, dtype=FLOAT), name=name))

    def zeros(self, dim: int) -> Node:
        return self.constant(np.zeros(dim, dtype=FLOAT))

    def backward(self, output: Node) -> None:
        """Accumulate d(output)/d(node) into .grad for every node on the tape."""
        if output.value.ndim != 0:
            raise GraphError(
                f"backward requires a scalar output, got shape {output.value.shape}"
            )
        if not np.isfinite(output.value):
            self._raise_first_nonfinite()
        for node in self.nodes:
            node.grad = None
        output.grad = np.ones((), dtype=FLOAT)
        for node in reversed(self.nodes):
            if node.grad is not None and node.bwd is not None:
                node.bwd(node.grad)

    def check_finite(self) -> None:
        """Scan every node and fail on the first non-finite value.

        The hot path only checks the scalar output and the collected
        gradients (NaN propagates there for this op inventory); this full
        scan is for tests and debugging.
        """
        self._raise_first_nonfinite()

    def _raise_first_nonfinite(self):
        for i, node in enumerate(self.nodes):
            if not np.all(np.isfinite(node.value)):
                label = node.name or f"{node.op}#{i}"
                raise NumericalError(f"non-finite value at node {label}")


def _acc(node: Node, g) -> None:
    if node.grad is None:
        node.grad = np.array(g, dtype=FLOAT)
    else:
        node.grad += g


def evaluate_with_gradients(graph: Graph, output: Node, params: dict[str, np.ndarray]):
    """Run backward from the scalar ``output`` and collect per-parameter grads.

    Every array in ``params`` must have been bound into ``graph`` via
    ``Graph.leaf``. Parameters untouched by the output get zero gradients.
    Raises NumericalError (naming the offending node) on NaN/Inf.
    """
    graph.backward(output)
    grads: dict[str, np.ndarray] = {}
    for name, array in params.items():
        leaf = graph._leaves.get(id(array))
        if leaf is None:
            raise GraphError(f"parameter {name!r} was never bound into the graph")
        g = leaf.grad if leaf.grad is not None else np.zeros_like(array)
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for parameter {name!r}")
        grads[name] = g
    return float(output.value), grads


# ---------------------------------------------------------------------------
# numeric kernels shared by graph ops and the no-grad decode path
# ---------------------------------------------------------------------------

def logsumexp_values(x: np.ndarray) -> float:
    m = np.max(x)
    if not np.isfinite(m):
        return float(m)
    return float(m + np.log(np.sum(np.exp(x - m))))


def log_softmax_values(x: np.ndarray) -> np.ndarray:
    m = np.max(x, axis=-1, keepdims=True)
    z = x - m
    return z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))


def log_cumsum_exp_values(x: np.ndarray, reverse: bool = False) -> np.ndarray:
    """Prefix (or suffix) logsumexp of a vector, computed stably."""
    if reverse:
        return np.logaddexp.accumulate(x[::-1])[::-1]
    return np.logaddexp.accumulate(x)


# ---------------------------------------------------------------------------
# ops
# ---------------------------------------------------------------------------

def add(g: Graph, a: Node, b: Node) -> Node:
    out = Node("add", a.value + b.value, (a, b))

    def bwd(grad):
        _acc(a, grad)
        _acc(b, grad)

    out.bwd = bwd
    return g._push(out)


def add_n(g: Graph, *nodes: Node) -> Node:
    value = nodes[0].value.copy()
    for n in nodes[1:]:
        value += n.value
    out = Node("add_n", value, nodes)

    def bwd(grad):
        for n in nodes:
            _acc(n, grad)

    out.bwd = bwd
    return g._push(out)


def sub(g: Graph, a: Node, b: Node) -> Node:
    out = Node("sub", a.value - b.value, (a, b))

    def bwd(grad):
        _acc(a, grad)
        _acc(b, -grad)

    out.bwd = bwd
    return g._push(out)


def mul(g: Graph, a: Node, b: Node) -> Node:
    out = Node("mul", a.value * b.value, (a, b))

    def bwd(grad):
        _acc(a, grad * b.value)
        _acc(b, grad * a.value)

    out.bwd = bwd
    return g._push(out)


def scale(g: Graph, a: Node, c: float) -> Node:
    out = Node("scale", a.value * c, (a,))

    def bwd(grad):
        _acc(a, grad * c)

    out.bwd = bwd
    return g._push(out)


def neg(g: Graph, a: Node) -> Node:
    return scale(g, a, -1.0)


def tanh(g: Graph, a: Node) -> Node:
    y = np.tanh(a.value)
    out = Node("tanh", y, (a,))

    def bwd(grad):
        _acc(a, grad * (1.0 - y * y))

    out.bwd = bwd
    return g._push(out)


def sigmoid(g: Graph, a: Node) -> Node:
    y = 1.0 / (1.0 + np.exp(-a.value))
    out = Node("sigmoid", y, (a,))

    def bwd(grad):
        _acc(a, grad * y * (1.0 - y))

    out.bwd = bwd
    return g._push(out)


def matvec(g: Graph, w: Node, x: Node) -> Node:
    """(m, n) @ (n,) -> (m,)."""
    out = Node("matvec", w.value @ x.value, (w, x))

    def bwd(grad):
        _acc(w, np.outer(grad, x.value))
        _acc(x, w.value.T @ grad)

    out.bwd = bwd
    return g._push(out)


def affine(g: Graph, w: Node, x: Node, b: Node) -> Node:
    """W @ x + b in one node."""
    out = Node("affine", w.value @ x.value + b.value, (w, x, b))

    def bwd(grad):
        _acc(w, np.outer(grad, x.value))
        _acc(x, w.value.T @ grad)
        _acc(b, grad)

    out.bwd = bwd
    return g._push(out)


def linear_rows(g: Graph, m: Node, w: Node, b: Node | None = None) -> Node:
    """Apply W @ row + b to every row of m: (L, n) -> (L, k)."""
    value = m.value @ w.value.T
    if b is not None:
        value = value + b.value
    parents = (m, w) if b is None else (m, w, b)
    out = Node("linear_rows", value, parents)

    def bwd(grad):
        _acc(m, grad @ w.value)
        _acc(w, grad.T @ m.value)
        if b is not None:
            _acc(b, grad.sum(axis=0))

    out.bwd = bwd
    return g._push(out)


def add_rowvec(g: Graph, m: Node, v: Node) -> Node:
    """Add a vector to every row of a matrix."""
    out = Node("add_rowvec", m.value + v.value, (m, v))

    def bwd(grad):
        _acc(m, grad)
        _acc(v, grad.sum(axis=0))

    out.bwd = bwd
    return g._push(out)


def concat(g: Graph, *nodes: Node) -> Node:
    sizes = [n.value.shape[0] for n in nodes]
    out = Node("concat", np.concatenate([n.value for n in nodes]), nodes)

    def bwd(grad):
        start = 0
        for n, size in zip(nodes, sizes):
            _acc(n, grad[start:start + size])
            start += size

    out.bwd = bwd
    return g._push(out)


def stack(g: Graph, nodes) -> Node:
    """Stack 1-D nodes into a matrix of rows."""
    nodes = tuple(nodes)
    out = Node("stack", np.stack([n.value for n in nodes]), nodes)

    def bwd(grad):
        for i, n in enumerate(nodes):
            _acc(n, grad[i])

    out.bwd = bwd
    return g._push(out)


def gather_row(g: Graph, table: Node, index: int) -> Node:
    out = Node("gather_row", table.value[index], (table,))

    def bwd(grad):
        if table.grad is None:
            table.grad = np.zeros_like(table.value)
        table.grad[index] += grad

    out.bwd = bwd
    return g._push(out)


def take_col(g: Graph, m: Node, col: int) -> Node:
    out = Node("take_col", m.value[:, col].copy(), (m,))

    def bwd(grad):
        if m.grad is None:
            m.grad = np.zeros_like(m.value)
        m.grad[:, col] += grad

    out.bwd = bwd
    return g._push(out)


def pick(g: Graph, x: Node, index: int) -> Node:
    """Scalar element of a vector."""
    out = Node("pick", np.asarray(x.value[index]), (x,))

    def bwd(grad):
        if x.grad is None:
            x.grad = np.zeros_like(x.value)
        x.grad[index] += grad

    out.bwd = bwd
    return g._push(out)


def vsum(g: Graph, x: Node) -> Node:
    """Sum of all elements -> scalar."""
    out = Node("vsum", np.asarray(x.value.sum(), dtype=FLOAT), (x,))

    def bwd(grad):
        _acc(x, np.full_like(x.value, grad))

    out.bwd = bwd
    return g._push(out)


def log_softmax(g: Graph, x: Node) -> Node:
    """Row-wise (last axis) log softmax of a vector or matrix."""
    y = log_softmax_values(x.value)
    out = Node("log_softmax", y, (x,))

    def bwd(grad):
        _acc(x, grad - np.exp(y) * grad.sum(axis=-1, keepdims=True))

    out.bwd = bwd
    return g._push(out)


def logsumexp(g: Graph, x: Node) -> Node:
    """Vector -> scalar logsumexp."""
    y = logsumexp_values(x.value)
    out = Node("logsumexp", np.asarray(y, dtype=FLOAT), (x,))

    def bwd(grad):
        _acc(x, np.exp(x.value - y) * grad)

    out.bwd = bwd
    return g._push(out)


def log_cumsum_exp(g: Graph, x: Node, reverse: bool = False) -> Node:
    """Running logsumexp over a vector, left-to-right or right-to-left."""
    y = log_cumsum_exp_values(x.value, reverse=reverse)
    out = Node("log_cumsum_exp", y, (x,))
    n = x.value.shape[0]

    def bwd(grad):
        # dy_i/dx_k = exp(x_k - y_i) on the triangle covered by the scan;
        # O(n^2) is fine at the lattice widths this model sees.
        diff = x.value[:, None] - y[None, :]
        if reverse:
            mask = np.tril(np.ones((n, n), dtype=bool))
        else:
            mask = np.triu(np.ones((n, n), dtype=bool))
        _acc(x, (np.exp(np.where(mask, diff, -np.inf)) * grad[None, :]).sum(axis=1))

    out.bwd = bwd
    return g._push(out)


def dropout(g: Graph, x: Node, rate: float, rng: np.random.Generator,
            train: bool) -> Node:
    """Inverted dropout; inference mode returns the input node untouched."""
    if rate < 0 or rate >= 1:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return x
    keep = (rng.random(x.value.shape) >= rate)
    factor = keep / (1.0 - rate)
    out = Node("dropout", x.value * factor, (x,))

    def bwd(grad):
        _acc(x, grad * factor)

    out.bwd = bwd
    return g._push(out)


# ---------------------------------------------------------------------------
# LSTM
# ---------------------------------------------------------------------------

@dataclass
class LstmParams:
    """Weights of one LSTM direction; each gate maps [x; h] -> hidden."""

    input_dim: int
    hidden_dim: int
    w_in: np.ndarray
    w_forget: np.ndarray
    w_out: np.ndarray
    w_cand: np.ndarray
    b_in: np.ndarray
    b_forget: np.ndarray
    b_out: np.ndarray
    b_cand: np.ndarray

    @classmethod
    def init(cls, input_dim: int, hidden_dim: int, rng: np.random.Generator):
        k = 1.0 / np.sqrt(hidden_dim)

        def w():
            return rng.uniform(-k, k, (hidden_dim, input_dim + hidden_dim)).astype(FLOAT)

        def b():
            return rng.uniform(-k, k, hidden_dim).astype(FLOAT)

        return cls(input_dim, hidden_dim, w(), w(), w(), w(), b(), b(), b(), b())

    def entries(self, prefix: str) -> dict[str, np.ndarray]:
        return {
            f"{prefix}.w_in": self.w_in, f"{prefix}.w_forget": self.w_forget,
            f"{prefix}.w_out": self.w_out, f"{prefix}.w_cand": self.w_cand,
            f"{prefix}.b_in": self.b_in, f"{prefix}.b_forget": self.b_forget,
            f"{prefix}.b_out": self.b_out, f"{prefix}.b_cand": self.b_cand,
        }


def lstm_step(g: Graph, p: LstmParams, x: Node, h: Node, c: Node):
    """One cell update; returns (h', c')."""
    z = concat(g, x, h)
    i = sigmoid(g, affine(g, g.leaf(p.w_in), z, g.leaf(p.b_in)))
    f = sigmoid(g, affine(g, g.leaf(p.w_forget), z, g.leaf(p.b_forget)))
    o = sigmoid(g, affine(g, g.leaf(p.w_out), z, g.leaf(p.b_out)))
    cand = tanh(g, affine(g, g.leaf(p.w_cand), z, g.leaf(p.b_cand)))
    c_new = add(g, mul(g, f, c), mul(g, i, cand))
    h_new = mul(g, o, tanh(g, c_new))
    return h_new, c_new


def lstm_run(g: Graph, p: LstmParams, inputs, reverse: bool = False):
    """Hidden state per position, scanning left-to-right or right-to-left."""
    order = range(len(inputs) - 1, -1, -1) if reverse else range(len(inputs))
    h = g.zeros(p.hidden_dim)
    c = g.zeros(p.hidden_dim)
    states: list[Node | None] = [None] * len(inputs)
    for t in order:
        h, c = lstm_step(g, p, inputs[t], h, c)
        states[t] = h
    return states


def bilstm(g: Graph, inputs, forward: LstmParams, backward: LstmParams):
    """Per position, [forward state ; backward state]. Empty in, empty out."""
    if forward.input_dim != backward.input_dim:
        raise GraphError("forward/backward LSTM input dims differ")
    for x in inputs:
        if x.value.shape[0] != forward.input_dim:
            raise GraphError(
                f"bilstm input dim {x.value.shape[0]} != expected {forward.input_dim}"
            )
    if not inputs:
        return []
    fwd = lstm_run(g, forward, inputs)
    bwd = lstm_run(g, backward, inputs, reverse=True)
    return [concat(g, f, b) for f, b in zip(fwd, bwd)]


# ---------------------------------------------------------------------------
# optimizer and friends
# ---------------------------------------------------------------------------

@dataclass
class OptimizerState:
    """Adam moments plus step counter; moments mirror parameter shapes."""

    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray], lr: float = 0.001):
        state = cls(lr=lr)
        for name, array in params.items():
            state.m[name] = np.zeros_like(array)
            state.v[name] = np.zeros_like(array)
        return state


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: OptimizerState):
    """In-place Adam update with bias correction; returns (params, state)."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    for name, p in params.items():
        gr = grads[name]
        if gr.shape != p.shape:
            raise GraphError(
                f"gradient shape {gr.shape} != parameter shape {p.shape} for {name!r}"
            )
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1 - b1) * gr
        v *= b2
        v += (1 - b2) * (gr * gr)
        m_hat = m / (1 - b1 ** state.t)
        v_hat = v / (1 - b2 ** state.t)
        p -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state


def global_norm(grads: dict[str, np.ndarray]) -> float:
    total = 0.0
    for gr in grads.values():
        total += float(np.sum(gr * gr))
    return float(np.sqrt(total))


def clip_by_global_norm(grads: dict[str, np.ndarray], max_norm: float = 5.0):
    """Scale all gradients uniformly so the global L2 norm is <= max_norm."""
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    norm = global_norm(grads)
    if norm > max_norm:
        factor = max_norm / norm
        for gr in grads.values():
            gr *= factor
    return grads
