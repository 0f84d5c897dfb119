"""Reverse-mode autodiff over dense float64 matrices.

Every ``Value`` holds a 2-D array.  Scalars are 1x1.  Ops build a DAG; calling
``backward`` on a 1x1 result walks it once in reverse topological order and
accumulates into ``grad`` of every leaf that requires gradients.
"""

from __future__ import annotations

from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np


def _as_matrix(data) -> np.ndarray:
    arr = np.array(data, dtype=np.float64)
    if arr.ndim == 0:
        return arr.reshape(1, 1)
    if arr.ndim == 1:
        return arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValueError(f"Value holds 2-D matrices, got shape {arr.shape}")
    return arr


class Value:
    def __init__(self, data, parents: Sequence["Value"] = (), op: str = "", requires_grad: bool = False):
        self.data = _as_matrix(data)
        self.grad = np.zeros_like(self.data)
        self.parents = tuple(parents)
        self.op = op
        self.requires_grad = requires_grad or any(p.requires_grad for p in self.parents)
        self._backward: Optional[Callable[[np.ndarray], None]] = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def __repr__(self):
        return f"Value(shape={self.shape}, op={self.op!r})"

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a 1x1 Value, got {self.shape}")
        return float(self.data[0, 0])

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def backward(self):
        backward(self)

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __neg__(self):
        return scalar_mul(self, -1.0)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scalar_mul(self, other)
        return hadamard(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return scalar_mul(self, 1.0 / other)
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    @property
    def T(self):
        return transpose(self)


class Parameter(Value):
    """Trainable leaf with a checkpoint name."""

    def __init__(self, data, name: str):
        super().__init__(data, requires_grad=True)
        self.name = name

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


def constant(data) -> Value:
    return data if isinstance(data, Value) else Value(data)


def _node(data, parents, op, backward_fn) -> Value:
    out = Value(data, parents, op)
    if out.requires_grad:
        out._backward = backward_fn
    return out


def _acc(v: Value, g: np.ndarray):
    if v.requires_grad:
        v.grad += g


def _check(cond: bool, op: str, *vals: Value):
    if not cond:
        shapes = " and ".join(str(v.shape) for v in vals)
        raise ValueError(f"{op}: incompatible shapes {shapes}")


# --- linear algebra ---------------------------------------------------------

def matmul(a, b) -> Value:
    a, b = constant(a), constant(b)
    _check(a.shape[1] == b.shape[0], "matmul", a, b)

    def bw(g):
        _acc(a, g @ b.data.T)
        _acc(b, a.data.T @ g)

    return _node(a.data @ b.data, (a, b), "matmul", bw)


def add(a, b) -> Value:
    """Elementwise sum; ``b`` may be a 1 x cols row broadcast over rows."""
    a, b = constant(a), constant(b)
    if a.shape != b.shape and b.shape == (1, a.shape[1]):
        def bw(g):
            _acc(a, g)
            _acc(b, g.sum(axis=0, keepdims=True))
        return _node(a.data + b.data, (a, b), "add_row", bw)
    if a.shape != b.shape and a.shape == (1, b.shape[1]):
        return add(b, a)
    _check(a.shape == b.shape, "add", a, b)

    def bw(g):
        _acc(a, g)
        _acc(b, g)

    return _node(a.data + b.data, (a, b), "add", bw)


def sub(a, b) -> Value:
    a, b = constant(a), constant(b)
    _check(a.shape == b.shape, "sub", a, b)

    def bw(g):
        _acc(a, g)
        _acc(b, -g)

    return _node(a.data - b.data, (a, b), "sub", bw)


def hadamard(a, b) -> Value:
    a, b = constant(a), constant(b)
    _check(a.shape == b.shape, "hadamard", a, b)

    def bw(g):
        _acc(a, g * b.data)
        _acc(b, g * a.data)

    return _node(a.data * b.data, (a, b), "hadamard", bw)


def scale_rows(x, s) -> Value:
    """Multiply row ``i`` of ``x`` by the scalar ``s[i, 0]``."""
    x, s = constant(x), constant(s)
    _check(s.shape == (x.shape[0], 1), "scale_rows", x, s)

    def bw(g):
        _acc(x, g * s.data)
        _acc(s, (g * x.data).sum(axis=1, keepdims=True))

    return _node(x.data * s.data, (x, s), "scale_rows", bw)


def scalar_mul(a, c: float) -> Value:
    a = constant(a)
    c = float(c)
    return _node(a.data * c, (a,), "scalar_mul", lambda g: _acc(a, g * c))


def div(a, b) -> Value:
    """Divide every entry of ``a`` by the 1x1 Value ``b``."""
    a, b = constant(a), constant(b)
    _check(b.shape == (1, 1), "div", a, b)
    bv = b.data[0, 0]

    def bw(g):
        _acc(a, g / bv)
        _acc(b, np.array([[-(g * a.data).sum() / bv ** 2]]))

    return _node(a.data / bv, (a, b), "div", bw)


def transpose(a) -> Value:
    a = constant(a)
    return _node(a.data.T, (a,), "transpose", lambda g: _acc(a, g.T))


def reshape(a, rows: int, cols: int) -> Value:
    a = constant(a)
    _check(a.data.size == rows * cols, "reshape", a)
    shape = a.shape
    return _node(a.data.reshape(rows, cols), (a,), "reshape", lambda g: _acc(a, g.reshape(shape)))


def concat_cols(values: Sequence[Value]) -> Value:
    vals = [constant(v) for v in values]
    rows = vals[0].shape[0]
    _check(all(v.shape[0] == rows for v in vals), "concat_cols", *vals)
    bounds = np.cumsum([0] + [v.shape[1] for v in vals])

    def bw(g):
        for v, lo, hi in zip(vals, bounds[:-1], bounds[1:]):
            _acc(v, g[:, lo:hi])

    return _node(np.hstack([v.data for v in vals]), vals, "concat_cols", bw)


def take_rows(x, idx) -> Value:
    x = constant(x)
    idx = np.asarray(idx, dtype=np.int64)

    def bw(g):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        _acc(x, full)

    return _node(x.data[idx], (x,), "take_rows", bw)


# --- reductions -------------------------------------------------------------

def row_mean(x) -> Value:
    """Column-wise mean taken across rows: N x d -> 1 x d."""
    x = constant(x)
    n = x.shape[0]
    return _node(x.data.mean(axis=0, keepdims=True), (x,), "row_mean",
                 lambda g: _acc(x, np.broadcast_to(g / n, x.shape)))


def row_max(x) -> Value:
    """Column-wise max across rows; gradient goes to the first argmax."""
    x = constant(x)
    arg = np.argmax(x.data, axis=0)
    cols = np.arange(x.shape[1])

    def bw(g):
        full = np.zeros_like(x.data)
        full[arg, cols] = g[0]
        _acc(x, full)

    return _node(x.data[arg, cols][None, :], (x,), "row_max", bw)


def sum(x) -> Value:  # noqa: A001 - mirrors the op name
    x = constant(x)
    return _node(x.data.sum(), (x,), "sum", lambda g: _acc(x, np.full(x.shape, g[0, 0])))


def trace(x) -> Value:
    x = constant(x)
    _check(x.shape[0] == x.shape[1], "trace", x)
    return _node(np.trace(x.data), (x,), "trace", lambda g: _acc(x, np.eye(x.shape[0]) * g[0, 0]))


def frobenius_norm(x) -> Value:
    """Frobenius norm; the subgradient at the zero matrix is taken as 0."""
    x = constant(x)
    nrm = float(np.sqrt((x.data ** 2).sum()))

    def bw(g):
        if nrm > 0:
            _acc(x, g[0, 0] * x.data / nrm)

    return _node(nrm, (x,), "frobenius_norm", bw)


# --- elementwise nonlinearities ---------------------------------------------

def relu(x) -> Value:
    x = constant(x)
    mask = x.data > 0
    return _node(x.data * mask, (x,), "relu", lambda g: _acc(x, g * mask))


def tanh(x) -> Value:
    x = constant(x)
    t = np.tanh(x.data)
    return _node(t, (x,), "tanh", lambda g: _acc(x, g * (1.0 - t ** 2)))


def sigmoid(x) -> Value:
    x = constant(x)
    s = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return _node(s, (x,), "sigmoid", lambda g: _acc(x, g * s * (1.0 - s)))


def softmax_rows(x) -> Value:
    x = constant(x)
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=1, keepdims=True)

    def bw(g):
        _acc(x, s * (g - (g * s).sum(axis=1, keepdims=True)))

    return _node(s, (x,), "softmax_rows", bw)


def log_softmax_rows(x) -> Value:
    x = constant(x)
    z = x.data - x.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    out = z - lse
    s = np.exp(out)
    return _node(out, (x,), "log_softmax_rows",
                 lambda g: _acc(x, g - s * g.sum(axis=1, keepdims=True)))


# --- losses -----------------------------------------------------------------

def cross_entropy(logits, label: int) -> Value:
    """``-log softmax(logits)[label]`` for a single 1 x C row, fused via log-sum-exp."""
    logits = constant(logits)
    _check(logits.shape[0] == 1, "cross_entropy", logits)
    z = logits.data - logits.data.max()
    lse = np.log(np.exp(z).sum())
    p = np.exp(z - lse)
    onehot = np.zeros_like(p)
    onehot[0, label] = 1.0
    return _node(lse - z[0, label], (logits,), "cross_entropy",
                 lambda g: _acc(logits, g[0, 0] * (p - onehot)))


def binary_cross_entropy(p, target: np.ndarray, mask: Optional[np.ndarray] = None, eps: float = 1e-12) -> Value:
    """Mean BCE of probabilities ``p`` against 0/1 ``target`` over ``mask`` entries."""
    p = constant(p)
    t = np.asarray(target, dtype=np.float64)
    w = np.ones_like(t) if mask is None else np.asarray(mask, dtype=np.float64)
    _check(t.shape == p.shape == w.shape, "binary_cross_entropy", p)
    count = w.sum()
    q = np.clip(p.data, eps, 1.0 - eps)
    loss = -(w * (t * np.log(q) + (1 - t) * np.log(1 - q))).sum() / count
    return _node(loss, (p,), "bce", lambda g: _acc(p, g[0, 0] * w * (q - t) / (q * (1 - q)) / count))


def mse(x, target: np.ndarray) -> Value:
    x = constant(x)
    t = np.asarray(target, dtype=np.float64)
    _check(t.shape == x.shape, "mse", x)
    diff = x.data - t
    return _node((diff ** 2).mean(), (x,), "mse", lambda g: _acc(x, g[0, 0] * 2.0 * diff / diff.size))


# --- backward ---------------------------------------------------------------

def _topological(root: Value) -> list[Value]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        v, expanded = stack.pop()
        if expanded:
            order.append(v)
            continue
        if id(v) in seen:
            continue
        seen.add(id(v))
        stack.append((v, True))
        for p in v.parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    return order


def backward(loss: Value):
    """Populate ``grad`` on every reachable leaf that requires gradients.

    Interior nodes are reset on each call so repeated calls accumulate only
    into leaves.
    """
    if loss.shape != (1, 1):
        raise ValueError(f"backward needs a scalar (1x1) loss, got shape {loss.shape}")
    order = _topological(loss)
    for v in order:
        if v.parents:
            v.grad = np.zeros_like(v.data)
    if loss.parents:
        loss.grad = np.ones((1, 1))
    else:
        loss.grad += 1.0
    for v in reversed(order):
        if v._backward is not None:
            v._backward(v.grad)


# --- optimisation -----------------------------------------------------------

class Adam:
    """Adam with bias correction and decoupled weight decay."""

    def __init__(self, params: Iterable[Parameter], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, weight_decay: float = 0.0):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        for p in self.params:
            if not np.all(np.isfinite(p.grad)):
                raise FloatingPointError(f"non-finite gradient in parameter {getattr(p, 'name', '?')!r}")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if self.weight_decay:
                p.data -= self.lr * self.weight_decay * p.data
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def glorot(rng: np.random.Generator, d_in: int, d_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (d_in + d_out))
    return rng.uniform(-limit, limit, size=(d_in, d_out))


def save_parameters(path, params: Sequence[Parameter]):
    """Write named tensors to an ``.npz`` container (shapes are stored with the arrays)."""
    names = [p.name for p in params]
    if len(set(names)) != len(names):
        raise ValueError("parameter names must be unique for checkpointing")
    with open(Path(path), "wb") as fh:
        np.savez(fh, **{p.name: p.data for p in params})


def load_parameters(path, params: Sequence[Parameter]):
    with np.load(Path(path)) as ckpt:
        for p in params:
            if p.name not in ckpt:
                raise KeyError(f"checkpoint has no tensor {p.name!r}")
            arr = ckpt[p.name]
            if arr.shape != p.shape:
                raise ValueError(f"{p.name}: checkpoint shape {arr.shape} != parameter shape {p.shape}")
            p.data[...] = arr
