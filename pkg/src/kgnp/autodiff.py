"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

Each operation records its inputs and a local backward closure on the
implicit tape (the operation graph); ``backward`` replays it once in
reverse topological order. Everything runs in 64-bit floats so gradient
checks against central finite differences stay tight.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericError, ShapeError


class Tensor:
    __slots__ = ("data", "grad", "_children", "_backward", "eps")

    def __init__(self, data, children=()):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._children = children
        self._backward = None
        self.eps = None

    @property
    def shape(self):
        return self.data.shape

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

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

    def __neg__(self):
        return mul(self, _wrap(-1.0))

    def __repr__(self):
        return f"Tensor(shape={self.shape}, data={self.data!r})"


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x) -> Tensor:
    return Tensor(np.asarray(x, dtype=np.float64))


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _binary(x: Tensor, y: Tensor, out_data, gx_fn, gy_fn) -> Tensor:
    out = Tensor(out_data, (x, y))

    def _back():
        g = out.grad
        x.accumulate(_unbroadcast(gx_fn(g), x.shape))
        y.accumulate(_unbroadcast(gy_fn(g), y.shape))
    out._backward = _back
    return out


def add(x: Tensor, y: Tensor) -> Tensor:
    return _binary(x, y, x.data + y.data, lambda g: g, lambda g: g)


def sub(x: Tensor, y: Tensor) -> Tensor:
    return _binary(x, y, x.data - y.data, lambda g: g, lambda g: -g)


def mul(x: Tensor, y: Tensor) -> Tensor:
    return _binary(x, y, x.data * y.data,
                   lambda g: g * y.data, lambda g: g * x.data)


def div(x: Tensor, y: Tensor) -> Tensor:
    return _binary(x, y, x.data / y.data,
                   lambda g: g / y.data, lambda g: -g * x.data / (y.data ** 2))


def log(x: Tensor) -> Tensor:
    if np.any(x.data <= 0.0):
        raise NumericError("log requires strictly positive input")
    out = Tensor(np.log(x.data), (x,))

    def _back():
        x.accumulate(out.grad / x.data)
    out._backward = _back
    return out


def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0.0), (x,))

    def _back():
        x.accumulate(out.grad * (x.data > 0.0))
    out._backward = _back
    return out


def sigmoid(x: Tensor) -> Tensor:
    out = Tensor(_stable_sigmoid(x.data), (x,))

    def _back():
        x.accumulate(out.grad * out.data * (1.0 - out.data))
    out._backward = _back
    return out


def _stable_sigmoid(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values to [lo, hi]; subgradient is identity inside, zero outside."""
    out = Tensor(np.clip(x.data, lo, hi), (x,))

    def _back():
        inside = (x.data >= lo) & (x.data <= hi)
        x.accumulate(out.grad * inside)
    out._backward = _back
    return out


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b for a 1-D input vector."""
    if x.data.ndim != 1 or w.data.ndim != 2 or x.shape[0] != w.shape[0]:
        raise ShapeError(f"linear: input {x.shape} incompatible with weight {w.shape}")
    if b.shape != (w.shape[1],):
        raise ShapeError(f"linear: bias {b.shape} incompatible with weight {w.shape}")
    out = Tensor(x.data @ w.data + b.data, (x, w, b))

    def _back():
        g = out.grad
        x.accumulate(w.data @ g)
        w.accumulate(np.outer(x.data, g))
        b.accumulate(g)
    out._backward = _back
    return out


def concat(xs: list[Tensor]) -> Tensor:
    if not xs:
        raise ShapeError("concat of an empty list")
    out = Tensor(np.concatenate([x.data for x in xs]), tuple(xs))
    sizes = [x.data.shape[0] for x in xs]

    def _back():
        offset = 0
        for x, n in zip(xs, sizes):
            x.accumulate(out.grad[offset:offset + n])
            offset += n
    out._backward = _back
    return out


def sum_tensors(xs: list[Tensor]) -> Tensor:
    """Element-wise sum of same-shape tensors."""
    if not xs:
        raise ShapeError("sum of an empty list")
    shape = xs[0].shape
    for x in xs:
        if x.shape != shape:
            raise ShapeError(f"sum: mixed shapes {shape} and {x.shape}")
    out = Tensor(np.sum(np.stack([x.data for x in xs]), axis=0), tuple(xs))

    def _back():
        for x in xs:
            x.accumulate(out.grad)
    out._backward = _back
    return out


def max_pool(xs: list[Tensor]) -> Tensor:
    """Element-wise max across a list; ties route the gradient to the first maximizer."""
    if not xs:
        raise ShapeError("max_pool of an empty list")
    shape = xs[0].shape
    for x in xs:
        if x.shape != shape:
            raise ShapeError(f"max_pool: mixed shapes {shape} and {x.shape}")
    stacked = np.stack([x.data for x in xs])
    winners = np.argmax(stacked, axis=0)
    out = Tensor(np.max(stacked, axis=0), tuple(xs))

    def _back():
        for i, x in enumerate(xs):
            x.accumulate(out.grad * (winners == i))
    out._backward = _back
    return out


def reduce_sum(x: Tensor) -> Tensor:
    out = Tensor(np.sum(x.data), (x,))

    def _back():
        x.accumulate(np.full_like(x.data, out.grad))
    out._backward = _back
    return out


def row(table: Tensor, index: int) -> Tensor:
    """Select one row of a 2-D parameter table; gradient scatters back."""
    if table.data.ndim != 2:
        raise ShapeError(f"row lookup needs a 2-D table, got {table.shape}")
    out = Tensor(table.data[index], (table,))

    def _back():
        g = np.zeros_like(table.data)
        g[index] = out.grad
        table.accumulate(g)
    out._backward = _back
    return out


def cosine(x: Tensor, y: Tensor) -> Tensor:
    """Cosine similarity of two 1-D vectors; zero-norm inputs score 0 with zero gradient."""
    if x.shape != y.shape or x.data.ndim != 1:
        raise ShapeError(f"cosine: shapes {x.shape} and {y.shape}")
    nx = np.linalg.norm(x.data)
    ny = np.linalg.norm(y.data)
    if nx == 0.0 or ny == 0.0:
        out = Tensor(0.0, (x, y))
        out._backward = lambda: None
        return out
    c = float(x.data @ y.data / (nx * ny))
    out = Tensor(c, (x, y))

    def _back():
        g = out.grad
        x.accumulate(g * (y.data / (nx * ny) - c * x.data / (nx * nx)))
        y.accumulate(g * (x.data / (nx * ny) - c * y.data / (ny * ny)))
    out._backward = _back
    return out


def gumbel_sigmoid(logit: Tensor, temperature: float, rng) -> Tensor:
    """Binary-concrete relaxation: sigmoid((logit + g1 - g2) / temperature).

    g1, g2 are independent standard Gumbel draws from ``rng``; the output
    lies strictly inside (0, 1) and is differentiable in the logit.
    """
    if temperature <= 0.0:
        raise NumericError(f"temperature must be positive, got {temperature}")
    g1 = rng.standard_gumbel(logit.shape)
    g2 = rng.standard_gumbel(logit.shape)
    val = _stable_sigmoid((logit.data + g1 - g2) / temperature)
    out = Tensor(val, (logit,))

    def _back():
        logit.accumulate(out.grad * out.data * (1.0 - out.data) / temperature)
    out._backward = _back
    return out


def gaussian_reparam(mu: Tensor, sigma: Tensor, rng=None, eps=None) -> Tensor:
    """z = mu + sigma * eps with eps ~ N(0, 1); the draw is kept on ``z.eps``."""
    if np.any(sigma.data <= 0.0):
        raise NumericError("sigma must be strictly positive element-wise")
    if eps is None:
        if rng is None:
            raise NumericError("gaussian_reparam needs an rng or an explicit eps")
        eps = rng.standard_normal(mu.shape)
    eps = np.asarray(eps, dtype=np.float64)
    z = add(mu, mul(sigma, constant(eps)))
    z.eps = eps
    return z


def backward(loss: Tensor, wrt: list[Tensor] | None = None):
    """Accumulate gradients of a scalar loss over the recorded tape.

    Topological order is built iteratively (tapes can be deep), and every
    node's closure runs exactly once. Returns the gradients of ``wrt`` when
    given.
    """
    if loss.shape != ():
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for child in node._children:
            if id(child) not in visited:
                stack.append((child, False))
    loss.accumulate(np.asarray(1.0))
    for node in reversed(topo):
        if node._backward is not None:
            node._backward()
    if wrt is not None:
        return [None if p.grad is None else p.grad.copy() for p in wrt]
    return None


# ---------------------------------------------------------------------------
# Parameters and the optimizer
# ---------------------------------------------------------------------------

GROUPS = ("encoder", "predictor", "extractor")


class ParameterStore:
    """Named trainable tensors partitioned into encoder/predictor/extractor groups."""

    def __init__(self):
        self._params: dict[str, tuple[Tensor, str]] = {}
        self._moments: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        self.step = 0

    def register(self, name: str, tensor: Tensor, group: str) -> Tensor:
        if name in self._params:
            raise ShapeError(f"parameter {name!r} registered twice")
        if group not in GROUPS:
            raise ShapeError(f"unknown parameter group {group!r}")
        self._params[name] = (tensor, group)
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name][0]

    def named(self, group: str | None = None) -> list[tuple[str, Tensor]]:
        return [(name, t) for name, (t, g) in self._params.items()
                if group is None or g == group]

    def group_of(self, name: str) -> str:
        return self._params[name][1]

    def zero_grad(self):
        for _, (t, _g) in self._params.items():
            t.grad = None

    def state_dict(self) -> dict:
        return {
            "step": self.step,
            "params": {name: {"group": g, "shape": list(t.shape),
                              "data": t.data.ravel().tolist()}
                       for name, (t, g) in self._params.items()},
            "moments": {name: {"m": m.ravel().tolist(), "v": v.ravel().tolist()}
                        for name, (m, v) in self._moments.items()},
        }

    def load_state_dict(self, state: dict):
        self.step = int(state["step"])
        for name, rec in state["params"].items():
            if name not in self._params:
                raise ShapeError(f"checkpoint parameter {name!r} unknown to this model")
            t, _ = self._params[name]
            data = np.asarray(rec["data"], dtype=np.float64).reshape(rec["shape"])
            if data.shape != t.shape:
                raise ShapeError(f"checkpoint shape {data.shape} != model shape {t.shape} for {name!r}")
            t.data = data
        self._moments = {}
        for name, rec in state.get("moments", {}).items():
            t = self._params[name][0]
            self._moments[name] = (np.asarray(rec["m"], dtype=np.float64).reshape(t.shape),
                                   np.asarray(rec["v"], dtype=np.float64).reshape(t.shape))


def adam_step(store: ParameterStore, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update over every parameter carrying a gradient."""
    store.step += 1
    t = store.step
    for name, tensor in store.named():
        if tensor.grad is None:
            continue
        m, v = store._moments.get(name, (np.zeros_like(tensor.data), np.zeros_like(tensor.data)))
        m = beta1 * m + (1.0 - beta1) * tensor.grad
        v = beta2 * v + (1.0 - beta2) * tensor.grad ** 2
        store._moments[name] = (m, v)
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        tensor.data = tensor.data - lr * m_hat / (np.sqrt(v_hat) + eps)


def init_uniform(rng, shape: tuple, fan_in: int) -> np.ndarray:
    """Scale-stable default init: uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)]."""
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, shape)
