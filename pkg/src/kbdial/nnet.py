"""Minimal reverse-mode autodiff over float64 numpy arrays.

Everything the agents differentiate (recurrent trackers, the policy network,
the soft posterior and its entropy summaries) is built from the small set of
tensor operations below. Values are numpy arrays; matrices follow a
column-batch convention (features along axis 0, batch along axis 1).
Gradients are checked against central finite differences in the test suite.
"""

from __future__ import annotations

import json
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

import numpy as np

__all__ = [
    "Node", "constant", "leaf", "no_grad", "backward",
    "add", "sub", "mul", "div", "matmul", "sigmoid", "tanh", "exp", "log",
    "nsum", "concat_rows", "slice_cols", "pick_columns", "take_rows", "softmax_cols",
    "ParamStore", "ModelConfig", "gru_step", "init_gru_params",
    "affine_softmax", "affine_sigmoid",
    "sgd_step", "RmsProp", "finite_diff_check",
    "save_checkpoint", "load_checkpoint",
]

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Build ops without recording parents (forward-only, cheaper graphs)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Node:
    """A value in the computation graph.

    ``parents`` holds ``(node, vjp)`` pairs, where ``vjp`` maps the gradient
    at this node to the gradient contribution for that parent. Leaves created
    through :func:`leaf` carry a name so :func:`backward` can report their
    gradients as a dict.
    """

    __slots__ = ("value", "parents", "grad", "name")

    def __init__(self, value, parents=(), name=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = parents
        self.grad = None
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def item(self) -> float:
        return float(self.value)

    # Arithmetic sugar; plain numbers/arrays are wrapped as constants.
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __rtruediv__(self, other):
        return div(_wrap(other), self)

    def __neg__(self):
        return mul(self, constant(-1.0))

    def __matmul__(self, other):
        return matmul(self, _wrap(other))


def constant(value) -> Node:
    return Node(value)


def leaf(value: np.ndarray, name: str) -> Node:
    return Node(value, name=name)


def _wrap(x) -> Node:
    return x if isinstance(x, Node) else Node(x)


def _make(value, *pairs) -> Node:
    """Create an op result, recording vjp closures only when grad is on."""
    if not _GRAD_ENABLED:
        return Node(value)
    return Node(value, parents=tuple(pairs))


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# -- elementwise and reduction ops -------------------------------------------

def add(a: Node, b: Node) -> Node:
    return _make(a.value + b.value,
                 (a, lambda g: _unbroadcast(g, a.value.shape)),
                 (b, lambda g: _unbroadcast(g, b.value.shape)))


def sub(a: Node, b: Node) -> Node:
    return _make(a.value - b.value,
                 (a, lambda g: _unbroadcast(g, a.value.shape)),
                 (b, lambda g: _unbroadcast(-g, b.value.shape)))


def mul(a: Node, b: Node) -> Node:
    return _make(a.value * b.value,
                 (a, lambda g: _unbroadcast(g * b.value, a.value.shape)),
                 (b, lambda g: _unbroadcast(g * a.value, b.value.shape)))


def div(a: Node, b: Node) -> Node:
    return _make(a.value / b.value,
                 (a, lambda g: _unbroadcast(g / b.value, a.value.shape)),
                 (b, lambda g: _unbroadcast(-g * a.value / (b.value * b.value),
                                            b.value.shape)))


def matmul(a: Node, b: Node) -> Node:
    return _make(a.value @ b.value,
                 (a, lambda g: g @ b.value.T),
                 (b, lambda g: a.value.T @ g))


def sigmoid(x: Node) -> Node:
    s = 1.0 / (1.0 + np.exp(-x.value))
    return _make(s, (x, lambda g: g * s * (1.0 - s)))


def tanh(x: Node) -> Node:
    t = np.tanh(x.value)
    return _make(t, (x, lambda g: g * (1.0 - t * t)))


def exp(x: Node) -> Node:
    e = np.exp(x.value)
    return _make(e, (x, lambda g: g * e))


def log(x: Node) -> Node:
    return _make(np.log(x.value), (x, lambda g: g / x.value))


def nsum(x: Node, axis: int | None = None, keepdims: bool = False) -> Node:
    val = x.value.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, x.value.shape).copy()

    return _make(val, (x, vjp))


# -- structural ops -----------------------------------------------------------

def concat_rows(parts: Iterable[Node]) -> Node:
    parts = list(parts)
    val = np.concatenate([p.value for p in parts], axis=0)
    pairs = []
    start = 0
    for p in parts:
        rows = p.value.shape[0]
        lo, hi = start, start + rows
        pairs.append((p, lambda g, lo=lo, hi=hi: g[lo:hi]))
        start = hi
    return _make(val, *pairs)


def slice_cols(x: Node, start: int, stop: int) -> Node:
    val = x.value[:, start:stop]

    def vjp(g):
        out = np.zeros_like(x.value)
        out[:, start:stop] = g
        return out

    return _make(val, (x, vjp))


def take_rows(x: Node, rows) -> Node:
    rows = np.asarray(rows, dtype=np.int64)
    val = x.value[rows]

    def vjp(g):
        out = np.zeros_like(x.value)
        np.add.at(out, rows, g)
        return out

    return _make(val, (x, vjp))


def pick_columns(x: Node, idx) -> Node:
    """Pick one row per column: result[0, b] = x[idx[b], b]."""
    idx = np.asarray(idx, dtype=np.int64)
    cols = np.arange(x.value.shape[1])
    val = x.value[idx, cols][None, :]

    def vjp(g):
        out = np.zeros_like(x.value)
        np.add.at(out, (idx, cols), g[0])
        return out

    return _make(val, (x, vjp))


def softmax_cols(z: Node) -> Node:
    """Column-wise softmax (shift-invariant via a detached max)."""
    shift = constant(z.value.max(axis=0, keepdims=True))
    e = exp(sub(z, shift))
    return div(e, nsum(e, axis=0, keepdims=True))


# -- backward pass -------------------------------------------------------------

def backward(loss: Node) -> dict[str, np.ndarray]:
    """Accumulate gradients of a scalar ``loss``; returns grads of named leaves."""
    if loss.value.size != 1:
        raise ValueError("backward expects a scalar loss")

    topo: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))

    for node in topo:
        node.grad = None
    loss.grad = np.ones_like(loss.value)

    grads: dict[str, np.ndarray] = {}
    for node in reversed(topo):
        g = node.grad
        if g is None:
            continue
        if node.name is not None:
            acc = grads.get(node.name)
            grads[node.name] = g.copy() if acc is None else acc + g
        for parent, vjp in node.parents:
            contribution = vjp(g)
            if parent.grad is None:
                parent.grad = np.array(contribution, dtype=np.float64, copy=True)
            else:
                parent.grad += contribution
    return grads


# -- parameters -----------------------------------------------------------------

@dataclass
class ModelConfig:
    """Sizes and learning hyperparameters for the neural components."""

    hidden_size: int = 50
    tracker_hidden_size: int = 100
    lr_il: float = 0.05
    lr_rl: float = 0.005
    batch_size: int = 128
    init_scale: float = 0.08

    def __post_init__(self) -> None:
        if self.hidden_size < 1 or self.tracker_hidden_size < 1:
            raise ValueError("hidden sizes must be positive")
        if self.lr_il <= 0 or self.lr_rl <= 0 or self.init_scale <= 0:
            raise ValueError("learning rates and init scale must be positive")
        if self.batch_size < 1:
            raise ValueError("batch size must be positive")

    def to_dict(self) -> dict:
        return {
            "hidden_size": self.hidden_size,
            "tracker_hidden_size": self.tracker_hidden_size,
            "lr_il": self.lr_il,
            "lr_rl": self.lr_rl,
            "batch_size": self.batch_size,
            "init_scale": self.init_scale,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelConfig":
        return cls(**{k: d[k] for k in cls().to_dict() if k in d})


class ParamStore:
    """Named float64 parameter arrays with uniform initialization."""

    def __init__(self, rng: np.random.Generator | None = None,
                 init_scale: float = 0.08):
        self.values: dict[str, np.ndarray] = {}
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.init_scale = init_scale

    def ensure(self, name: str, shape: tuple[int, ...]) -> np.ndarray:
        if name not in self.values:
            self.values[name] = self.rng.uniform(
                -self.init_scale, self.init_scale, size=shape)
        return self.values[name]

    def node(self, name: str) -> Node:
        return leaf(self.values[name], name)

    def names(self) -> list[str]:
        return list(self.values)

    def copy(self) -> "ParamStore":
        clone = ParamStore(self.rng, self.init_scale)
        clone.values = {k: v.copy() for k, v in self.values.items()}
        return clone


# -- recurrent cell and heads ----------------------------------------------------

_GRU_KEYS = ("Wr", "Ur", "br", "Wz", "Uz", "bz", "Wh", "Uh", "bh")


def init_gru_params(store: ParamStore, prefix: str, in_dim: int, hidden: int) -> None:
    for gate in "rzh":
        store.ensure(f"{prefix}.W{gate}", (hidden, in_dim))
        store.ensure(f"{prefix}.U{gate}", (hidden, hidden))
        store.ensure(f"{prefix}.b{gate}", (hidden, 1))


def gru_params(store: ParamStore, prefix: str) -> dict[str, Node]:
    return {k: store.node(f"{prefix}.{k}") for k in _GRU_KEYS}


def gru_step(x: Node, h_prev: Node, p: Mapping[str, Node]) -> Node:
    """One gated-recurrent step. ``x``: (in, B), ``h_prev``: (hidden, B)."""
    r = sigmoid(p["Wr"] @ x + p["Ur"] @ h_prev + p["br"])
    z = sigmoid(p["Wz"] @ x + p["Uz"] @ h_prev + p["bz"])
    h_tilde = tanh(p["Wh"] @ x + p["Uh"] @ mul(r, h_prev) + p["bh"])
    one = constant(1.0)
    return add(mul(sub(one, z), h_prev), mul(z, h_tilde))


def affine_softmax(h: Node, w: Node, b: Node) -> Node:
    """Column-wise distribution softmax(w @ h + b)."""
    return softmax_cols(w @ h + b)


def affine_sigmoid(h: Node, w: Node, b: Node) -> Node:
    """Column-wise scalar probability sigmoid(w @ h + b); shape (1, B)."""
    return sigmoid(w @ h + b)


# -- optimizers -------------------------------------------------------------------

def sgd_step(store: ParamStore, grads: Mapping[str, np.ndarray], lr: float) -> None:
    for name, g in grads.items():
        store.values[name] -= lr * g


class RmsProp:
    """RMSProp with per-parameter mean-square accumulators."""

    def __init__(self, lr: float, decay: float = 0.9, eps: float = 1e-8):
        self.lr = lr
        self.decay = decay
        self.eps = eps
        self.acc: dict[str, np.ndarray] = {}

    def step(self, store: ParamStore, grads: Mapping[str, np.ndarray]) -> None:
        for name, g in grads.items():
            acc = self.acc.get(name)
            if acc is None:
                acc = np.zeros_like(g)
                self.acc[name] = acc
            acc *= self.decay
            acc += (1.0 - self.decay) * g * g
            store.values[name] -= self.lr * g / (np.sqrt(acc) + self.eps)


# -- verification ------------------------------------------------------------------

def finite_diff_check(build: Callable[[], Node], store: ParamStore,
                      eps: float = 1e-5,
                      param_names: Iterable[str] | None = None,
                      debug_detached: bool = False) -> float:
    """Max relative error between analytic gradients and central differences.

    ``build`` must construct the scalar loss from the store's current values.
    Parameters absent from the analytic gradient dict are treated as zero
    (detached); with ``debug_detached`` those names are reported.
    """
    analytic = backward(build())
    names = list(param_names) if param_names is not None else store.names()
    if debug_detached:
        detached = [n for n in names if n not in analytic]
        if detached:
            import logging

            logging.getLogger(__name__).warning(
                "parameters detached from the loss: %s", detached)

    worst = 0.0
    for name in names:
        value = store.values[name]
        grad = analytic.get(name, np.zeros_like(value))
        flat = value.reshape(-1)
        gflat = np.asarray(grad).reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + eps
            hi = build().item()
            flat[k] = orig - eps
            lo = build().item()
            flat[k] = orig
            numeric = (hi - lo) / (2.0 * eps)
            denom = max(abs(numeric), abs(gflat[k]), 1e-4)
            worst = max(worst, abs(numeric - gflat[k]) / denom)
    return worst


# -- checkpoints --------------------------------------------------------------------

CHECKPOINT_VERSION = 1


def save_checkpoint(path: str, store: ParamStore, config: Mapping,
                    extras: Mapping | None = None) -> None:
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "config": dict(config),
        "params": {
            name: {"shape": list(arr.shape), "data": arr.reshape(-1).tolist()}
            for name, arr in store.values.items()
        },
        "extras": dict(extras) if extras else {},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_checkpoint(path: str) -> tuple[ParamStore, dict, dict]:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    version = payload.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version: {version!r}")
    store = ParamStore()
    for name, entry in payload["params"].items():
        store.values[name] = np.array(
            entry["data"], dtype=np.float64).reshape(entry["shape"])
    return store, payload.get("config", {}), payload.get("extras", {})
