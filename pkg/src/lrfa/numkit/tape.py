"""Reverse-mode differentiation tape over float64 numpy arrays.

Every differentiable loss and adapter forward in the library is composed from
the primitives here.  A ``Tensor`` wraps a value plus the vector-Jacobian
products needed to push gradients back to its parents; ``backward`` walks the
graph once in reverse topological order.

Design constraints honoured throughout:
  * all arithmetic is float64,
  * reductions are fixed-order (plain numpy), so repeated evaluation of the
    same graph is bit-identical,
  * gradients must survive central-difference checks at 1e-4 relative error,
    so only smooth primitives are used on differentiable paths (abs is the
    one subgradient exception, with d|x|/dx = 0 at x = 0).
"""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError, NumericError

__all__ = [
    "Tensor",
    "constant",
    "leaf",
    "lift",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "matmul",
    "transpose",
    "tsum",
    "tmean",
    "exp",
    "log",
    "sqrt",
    "square",
    "power",
    "tabs",
    "tanh",
    "sigmoid",
    "softplus",
    "concat",
    "gather_rows",
    "gather_cols",
    "row_softmax",
    "row_log_softmax",
    "layer_norm_rows",
    "l2_normalize_rows",
    "cosine_rows_t",
    "backward",
]


class Tensor:
    """A node in the differentiation graph.

    ``parents`` and ``vjps`` are parallel tuples: ``vjps[i]`` maps the
    gradient at this node to the gradient contribution for ``parents[i]``.
    """

    __slots__ = ("value", "grad", "parents", "vjps")

    def __init__(self, value, parents=(), vjps=()):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self.vjps = vjps

    @property
    def shape(self):
        return self.value.shape

    def item(self) -> float:
        return float(self.value)

    # Operator sugar; scalars and ndarrays are promoted to constants.
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

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    def __neg__(self):
        return neg(self)

    def __repr__(self):
        return f"Tensor(shape={self.value.shape})"


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def constant(x) -> Tensor:
    """A graph node with no parents (gradients stop here)."""
    return Tensor(np.asarray(x, dtype=np.float64))


def leaf(x) -> Tensor:
    """Alias of constant; leaves are the nodes whose .grad callers read."""
    return constant(x)


def lift(params: dict) -> dict:
    """Wrap a dict of named ndarrays into leaf tensors, preserving order."""
    return {name: leaf(value) for name, value in params.items()}


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad over axes that were broadcast to produce ``shape``-shaped input."""
    if grad.shape == shape:
        return grad
    # collapse extra leading axes
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a: Tensor, b: Tensor) -> Tensor:
    return Tensor(
        a.value + b.value,
        (a, b),
        (
            lambda g: _unbroadcast(g, a.value.shape),
            lambda g: _unbroadcast(g, b.value.shape),
        ),
    )


def sub(a: Tensor, b: Tensor) -> Tensor:
    return Tensor(
        a.value - b.value,
        (a, b),
        (
            lambda g: _unbroadcast(g, a.value.shape),
            lambda g: _unbroadcast(-g, b.value.shape),
        ),
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    return Tensor(
        a.value * b.value,
        (a, b),
        (
            lambda g: _unbroadcast(g * b.value, a.value.shape),
            lambda g: _unbroadcast(g * a.value, b.value.shape),
        ),
    )


def div(a: Tensor, b: Tensor) -> Tensor:
    inv = 1.0 / b.value
    return Tensor(
        a.value * inv,
        (a, b),
        (
            lambda g: _unbroadcast(g * inv, a.value.shape),
            lambda g: _unbroadcast(-g * a.value * inv * inv, b.value.shape),
        ),
    )


def neg(a: Tensor) -> Tensor:
    return Tensor(-a.value, (a,), (lambda g: -g,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise DimensionError("matmul requires 2-D operands", a.value.shape, b.value.shape)
    if a.value.shape[1] != b.value.shape[0]:
        raise DimensionError("matmul inner dimensions differ", a.value.shape, b.value.shape)
    return Tensor(
        a.value @ b.value,
        (a, b),
        (lambda g: g @ b.value.T, lambda g: a.value.T @ g),
    )


def transpose(a: Tensor) -> Tensor:
    return Tensor(a.value.T, (a,), (lambda g: g.T,))


def tsum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    shape = a.value.shape

    def vjp(g):
        if axis is None:
            return np.broadcast_to(g, shape).copy()
        gg = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(gg, shape).copy()

    return Tensor(a.value.sum(axis=axis, keepdims=keepdims), (a,), (vjp,))


def tmean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    n = a.value.size if axis is None else a.value.shape[axis]
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / n)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.value)
    return Tensor(out, (a,), (lambda g: g * out,))


def log(a: Tensor) -> Tensor:
    return Tensor(np.log(a.value), (a,), (lambda g: g / a.value,))


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.value)
    return Tensor(out, (a,), (lambda g: g * 0.5 / out,))


def square(a: Tensor) -> Tensor:
    return Tensor(a.value * a.value, (a,), (lambda g: g * 2.0 * a.value,))


def power(a: Tensor, p: float) -> Tensor:
    """Elementwise a**p for scalar p.

    Non-integer exponents require a strictly positive base.
    """
    if p != int(p) and np.any(a.value <= 0.0):
        raise NumericError("power with non-integer exponent requires positive base")
    out = np.power(a.value, p)
    return Tensor(out, (a,), (lambda g: g * p * np.power(a.value, p - 1.0),))


def tabs(a: Tensor) -> Tensor:
    # subgradient convention: d|x|/dx = sign(x), which is 0 at x = 0
    return Tensor(np.abs(a.value), (a,), (lambda g: g * np.sign(a.value),))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.value)
    return Tensor(out, (a,), (lambda g: g * (1.0 - out * out),))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    out = _sigmoid(a.value)
    return Tensor(out, (a,), (lambda g: g * out * (1.0 - out),))


def softplus(a: Tensor) -> Tensor:
    """log(1 + exp(x)) computed without overflow; derivative is sigmoid(x)."""
    x = a.value
    out = np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)
    return Tensor(out, (a,), (lambda g: g * _sigmoid(x),))


def concat(parts: list[Tensor], axis: int = 0) -> Tensor:
    values = [p.value for p in parts]
    sizes = [v.shape[axis] for v in values]
    offsets = np.cumsum([0] + sizes)

    def make_vjp(i):
        lo, hi = offsets[i], offsets[i + 1]

        def vjp(g):
            index = [slice(None)] * g.ndim
            index[axis] = slice(lo, hi)
            return g[tuple(index)]

        return vjp

    return Tensor(
        np.concatenate(values, axis=axis),
        tuple(parts),
        tuple(make_vjp(i) for i in range(len(parts))),
    )


def gather_rows(a: Tensor, idx) -> Tensor:
    """Select (possibly repeated) rows; gradient scatter-adds back."""
    idx = np.asarray(idx, dtype=np.intp)

    def vjp(g):
        out = np.zeros_like(a.value)
        np.add.at(out, idx, g)
        return out

    return Tensor(a.value[idx], (a,), (vjp,))


def gather_cols(a: Tensor, idx) -> Tensor:
    idx = np.asarray(idx, dtype=np.intp)

    def vjp(g):
        out = np.zeros_like(a.value)
        np.add.at(out.T, idx, g.T)
        return out

    return Tensor(a.value[:, idx], (a,), (vjp,))


def row_softmax(a: Tensor, temperature: float = 1.0) -> Tensor:
    """Row-wise softmax(x / temperature) with a detached max shift.

    The subtracted row maximum is a constant, which is gradient-exact because
    softmax is shift invariant.
    """
    shift = constant(a.value.max(axis=-1, keepdims=True))
    z = (a - shift) * (1.0 / temperature)
    e = exp(z)
    return div(e, tsum(e, axis=-1, keepdims=True))


def row_log_softmax(a: Tensor, temperature: float = 1.0) -> Tensor:
    shift = constant(a.value.max(axis=-1, keepdims=True))
    z = (a - shift) * (1.0 / temperature)
    return z - log(tsum(exp(z), axis=-1, keepdims=True))


def layer_norm_rows(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-6) -> Tensor:
    """Per-row standardization followed by an affine map (gain/bias are 1 x d)."""
    mu = tmean(a, axis=-1, keepdims=True)
    centered = a - mu
    var = tmean(square(centered), axis=-1, keepdims=True)
    return div(centered, sqrt(var + eps)) * gain + bias


def l2_normalize_rows(a: Tensor) -> Tensor:
    norms = sqrt(tsum(square(a), axis=-1, keepdims=True))
    return div(a, norms)


def cosine_rows_t(x: Tensor, y: Tensor) -> Tensor:
    """Differentiable cosine-similarity table: entry (i, j) = cos(x_i, y_j)."""
    return matmul(l2_normalize_rows(x), transpose(l2_normalize_rows(y)))


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(root: Tensor) -> None:
    """Accumulate gradients of a scalar root into every reachable node's .grad."""
    if root.value.size != 1:
        raise DimensionError("backward requires a scalar root", root.value.shape, None)
    if not np.isfinite(root.value):
        raise NumericError("backward called on a non-finite value")
    order = _topo_order(root)
    for node in order:
        node.grad = None
    root.grad = np.ones_like(root.value)
    for node in reversed(order):
        if node.grad is None:
            continue
        for parent, vjp in zip(node.parents, node.vjps):
            contrib = vjp(node.grad)
            # grads are only ever reassigned (never mutated), so taking the
            # first contribution by reference is safe
            parent.grad = contrib if parent.grad is None else parent.grad + contrib
