"""Minimal reverse-mode autodiff over dense float64 matrices.

Everything upstream (the model, the contrastive losses) is written against
the handful of primitives defined here: matmul, broadcast add, elementwise
scale, relu, inverted dropout, row L2-normalization, row log-softmax, a
constant-weighted sum reduction, and a softmax-weighted layer combination.

A :class:`Tape` records nodes in creation order; since creation order is a
valid topological order, the backward sweep just walks the record in
reverse and accumulates gradients additively into every parent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ShapeMismatchError(ValueError):
    """Operands have incompatible shapes."""


class DegenerateVectorError(ValueError):
    """A row with (near-)zero norm reached a normalization step."""


class NumericalError(RuntimeError):
    """A non-finite value appeared where finite math was required."""


_NORM_FLOOR = 1e-12


def _as_matrix(value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ShapeMismatchError(f"expected a 2-D matrix, got shape {arr.shape}")
    return arr


def _require_finite(arr: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"non-finite values produced by {op}")
    return arr


class Var:
    """One node in the computation graph: a matrix value plus backward hook."""

    __slots__ = ("value", "grad", "tape", "_parents", "_backward")

    def __init__(self, value: np.ndarray, tape: "Tape | None", parents=()):
        self.value = value
        self.grad: np.ndarray | None = None
        self.tape = tape
        self._parents = tuple(parents)
        self._backward = None
        if tape is not None:
            tape._record(self)

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += grad

    def item(self) -> float:
        if self.value.size != 1:
            raise ShapeMismatchError(f"item() needs a 1x1 matrix, got {self.shape}")
        return float(self.value[0, 0])

    def __matmul__(self, other: "Var") -> "Var":
        return matmul(self, other)

    def __add__(self, other: "Var") -> "Var":
        return add(self, other)

    def __mul__(self, c: float) -> "Var":
        return scale(self, c)

    __rmul__ = __mul__


class Tape:
    """Ordered record of a forward pass; replayed in reverse for gradients."""

    def __init__(self):
        self._nodes: list[Var] = []

    def _record(self, node: Var) -> None:
        self._nodes.append(node)

    def leaf(self, value, requires_grad: bool = True) -> Var:
        node = Var(_as_matrix(value).copy(), self)
        if requires_grad:
            node.grad = np.zeros_like(node.value)
        return node

    def constant(self, value) -> Var:
        return Var(_as_matrix(value).copy(), self)

    def backward(self, root: Var) -> None:
        if root.value.size != 1:
            raise ShapeMismatchError("backward() expects a scalar (1x1) root")
        root.accumulate(np.ones_like(root.value))
        for node in reversed(self._nodes):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def _unary(op_name, x: Var, value: np.ndarray, grad_fn) -> Var:
    out = Var(_require_finite(value, op_name), x.tape, (x,))

    def backward(g):
        x.accumulate(grad_fn(g))

    out._backward = backward
    return out


def matmul(a: Var, b: Var) -> Var:
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(f"matmul: {a.shape} x {b.shape}")
    out = Var(_require_finite(a.value @ b.value, "matmul"), a.tape, (a, b))

    def backward(g):
        a.accumulate(g @ b.value.T)
        b.accumulate(a.value.T @ g)

    out._backward = backward
    return out


def add(a: Var, b: Var) -> Var:
    """Elementwise sum; also accepts a 1xN row bias broadcast over a's rows."""
    broadcast = b.shape != a.shape
    if broadcast and not (b.shape == (1, a.shape[1])):
        raise ShapeMismatchError(f"add: {a.shape} + {b.shape}")
    out = Var(_require_finite(a.value + b.value, "add"), a.tape, (a, b))

    def backward(g):
        a.accumulate(g)
        b.accumulate(g.sum(axis=0, keepdims=True) if broadcast else g)

    out._backward = backward
    return out


def scale(x: Var, c: float) -> Var:
    return _unary("scale", x, x.value * c, lambda g: g * c)


def transpose(x: Var) -> Var:
    out = Var(x.value.T.copy(), x.tape, (x,))
    out._backward = lambda g: x.accumulate(g.T)
    return out


def relu(x: Var) -> Var:
    mask = x.value > 0.0
    return _unary("relu", x, np.where(mask, x.value, 0.0), lambda g: g * mask)


def dropout(x: Var, p: float, mode: str, rng: np.random.Generator) -> Var:
    """Inverted dropout: survivors scaled by 1/(1-p) in train mode, identity in eval."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if mode == "eval" or p == 0.0:
        return _unary("dropout", x, x.value.copy(), lambda g: g)
    keep = rng.random(x.shape) >= p
    factor = keep / (1.0 - p)
    return _unary("dropout", x, x.value * factor, lambda g: g * factor)


def l2_normalize_rows(x: Var) -> Var:
    norms = np.linalg.norm(x.value, axis=1, keepdims=True)
    if np.any(norms < _NORM_FLOOR):
        bad = int(np.argmin(norms))
        raise DegenerateVectorError(f"row {bad} has norm {norms[bad, 0]:.3e} < {_NORM_FLOOR}")
    y = x.value / norms

    def grad_fn(g):
        # d/dx (x/|x|) applied rowwise: (g - y * <g, y>) / |x|
        dots = np.sum(g * y, axis=1, keepdims=True)
        return (g - y * dots) / norms

    return _unary("l2_normalize", x, y, grad_fn)


def log_softmax_rows(x: Var) -> Var:
    shifted = x.value - x.value.max(axis=1, keepdims=True)
    logz = np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))
    y = shifted - logz
    softmax = np.exp(y)

    def grad_fn(g):
        return g - softmax * g.sum(axis=1, keepdims=True)

    return _unary("log_softmax", x, y, grad_fn)


def weighted_sum(x: Var, weights: np.ndarray) -> Var:
    """sum(weights * x) as a 1x1 matrix; weights is a constant array."""
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != x.shape:
        raise ShapeMismatchError(f"weighted_sum: {x.shape} vs weights {weights.shape}")
    value = np.array([[float(np.sum(weights * x.value))]])
    return _unary("weighted_sum", x, value, lambda g: g[0, 0] * weights)


def aggregate_layers(layers: list[Var], layer_logits: Var) -> Var:
    """Convex combination of same-shape matrices with softmax(layer_logits) weights."""
    n = len(layers)
    if layer_logits.value.size != n:
        raise ShapeMismatchError(
            f"aggregate_layers: {n} layers but {layer_logits.value.size} weights"
        )
    shape = layers[0].shape
    for layer in layers[1:]:
        if layer.shape != shape:
            raise ShapeMismatchError(f"aggregate_layers: mixed shapes {shape} vs {layer.shape}")
    logits = layer_logits.value.reshape(-1)
    shifted = np.exp(logits - logits.max())
    s = shifted / shifted.sum()
    value = sum(s[i] * layers[i].value for i in range(n))
    out = Var(_require_finite(value, "aggregate_layers"), layer_logits.tape,
              tuple(layers) + (layer_logits,))

    def backward(g):
        contribs = np.array([np.sum(layers[i].value * g) for i in range(n)])
        for i in range(n):
            layers[i].accumulate(s[i] * g)
        dlogits = s * (contribs - np.dot(s, contribs))
        layer_logits.accumulate(dlogits.reshape(layer_logits.shape))

    out._backward = backward
    return out


@dataclass
class AdamWConfig:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01


@dataclass
class AdamWState:
    """Decoupled-weight-decay Adam state over a named parameter dict."""

    config: AdamWConfig
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adamw_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
               state: AdamWState) -> None:
    """One in-place AdamW update with bias correction."""
    cfg = state.config
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - cfg.beta1 ** t
    bc2 = 1.0 - cfg.beta2 ** t
    for name in sorted(params):
        p = params[name]
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeMismatchError(f"adamw_step: {name} param {p.shape} vs grad {g.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m = state.m[name]
        v = state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
        p -= cfg.lr * (update + cfg.weight_decay * p)


def check_gradients(f, params: dict[str, np.ndarray], epsilon: float = 1e-6) -> float:
    """Max relative error between tape gradients and central finite differences.

    ``f(params) -> (loss, grads)`` must be pure and deterministic (dropout in
    eval mode or with a frozen mask). Relative error per entry is
    |analytic - numeric| / max(1, |numeric|).
    """
    loss, analytic = f(params)
    if not np.isfinite(loss):
        raise NumericalError("loss is non-finite at the evaluation point")
    worst = 0.0
    for name in sorted(params):
        p = params[name]
        a = analytic[name]
        if not np.all(np.isfinite(a)):
            raise NumericalError(f"non-finite analytic gradient for parameter {name}")
        flat = p.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + epsilon
            hi, _ = f(params)
            flat[idx] = orig - epsilon
            lo, _ = f(params)
            flat[idx] = orig
            numeric = (hi - lo) / (2.0 * epsilon)
            if not np.isfinite(numeric):
                raise NumericalError(f"non-finite finite difference for parameter {name}")
            err = abs(a.reshape(-1)[idx] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, err)
    return worst
