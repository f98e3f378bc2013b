"""Minimal reverse-mode gradient engine.

Values are float64 ndarrays wrapped in `Node`s; building an expression
records the computation graph (the tape), and `backward` replays it in
reverse topological order. Only the operations the recurrent policy and
classifiers need are provided.

Every op dispatches on its argument type: `Node` in, `Node` out (taped);
plain ndarray in, plain ndarray out (no tape, any float dtype). The policy
and classifier forward math is written once against these functions and
serves both the training path and dtype-generic value-only evaluation.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Node", "constant", "is_node", "value_of",
    "matmul", "concat", "tanh", "sigmoid", "exp", "log", "softplus",
    "log_softmax", "softmax", "pick", "sum_all", "sum_axis",
    "backward", "backward_map", "ParameterSet",
]


def _sum_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to the source shape."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


class Node:
    """One tape entry: a value plus vector-Jacobian callbacks to parents."""

    __slots__ = ("value", "parents", "vjps")

    # keep numpy from absorbing Node into elementwise object loops
    __array_ufunc__ = None

    def __init__(self, value, parents: tuple = (), vjps: tuple = ()):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = parents
        self.vjps = vjps

    @property
    def shape(self):
        return self.value.shape

    def __add__(self, other):
        return _add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return _mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return _add(self, _neg(_wrap(other)))

    def __rsub__(self, other):
        return _add(_wrap(other), _neg(self))

    def __neg__(self):
        return _neg(self)

    def __truediv__(self, other):
        return _div(self, other)

    def __rtruediv__(self, other):
        return _div(_wrap(other), self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Node(shape={self.value.shape})"


def is_node(x) -> bool:
    return isinstance(x, Node)


def constant(x) -> Node:
    """Wrap an array as a leaf that accumulates no gradient."""
    return Node(x)


def value_of(x):
    return x.value if isinstance(x, Node) else x


def _wrap(x) -> Node:
    return x if isinstance(x, Node) else Node(x)


def _any_node(*xs) -> bool:
    return any(isinstance(x, Node) for x in xs)


def _add(a, b):
    if not _any_node(a, b):
        return a + b
    a, b = _wrap(a), _wrap(b)
    return Node(
        a.value + b.value,
        (a, b),
        (lambda g: _sum_to(g, a.value.shape), lambda g: _sum_to(g, b.value.shape)),
    )


def _mul(a, b):
    if not _any_node(a, b):
        return a * b
    a, b = _wrap(a), _wrap(b)
    return Node(
        a.value * b.value,
        (a, b),
        (
            lambda g: _sum_to(g * b.value, a.value.shape),
            lambda g: _sum_to(g * a.value, b.value.shape),
        ),
    )


def _div(a, b):
    if not _any_node(a, b):
        return a / b
    a, b = _wrap(a), _wrap(b)
    inv = 1.0 / b.value
    return Node(
        a.value * inv,
        (a, b),
        (
            lambda g: _sum_to(g * inv, a.value.shape),
            lambda g: _sum_to(-g * a.value * inv * inv, b.value.shape),
        ),
    )


def _neg(a: Node):
    return Node(-a.value, (a,), (lambda g: -g,))


def matmul(a, b):
    if not _any_node(a, b):
        return a @ b
    a, b = _wrap(a), _wrap(b)
    return Node(
        a.value @ b.value,
        (a, b),
        (lambda g: g @ b.value.T, lambda g: a.value.T @ g),
    )


def concat(parts: Sequence, axis: int = -1):
    if not _any_node(*parts):
        return np.concatenate(parts, axis=axis)
    nodes = [_wrap(p) for p in parts]
    values = [n.value for n in nodes]
    sizes = [v.shape[axis] for v in values]
    offsets = np.cumsum([0] + sizes)

    def make_vjp(i):
        lo, hi = offsets[i], offsets[i + 1]

        def vjp(g):
            index = [slice(None)] * g.ndim
            index[axis] = slice(lo, hi)
            return g[tuple(index)]

        return vjp

    return Node(
        np.concatenate(values, axis=axis),
        tuple(nodes),
        tuple(make_vjp(i) for i in range(len(nodes))),
    )


def tanh(x):
    if not is_node(x):
        return np.tanh(x)
    t = np.tanh(x.value)
    return Node(t, (x,), (lambda g: g * (1.0 - t * t),))


def sigmoid(x):
    if not is_node(x):
        return _sigmoid_raw(x)
    s = _sigmoid_raw(x.value)
    return Node(s, (x,), (lambda g: g * s * (1.0 - s),))


def _sigmoid_raw(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def exp(x):
    if not is_node(x):
        return np.exp(x)
    e = np.exp(x.value)
    return Node(e, (x,), (lambda g: g * e,))


def log(x):
    if not is_node(x):
        return np.log(x)
    return Node(np.log(x.value), (x,), (lambda g: g / x.value,))


def softplus(x):
    """log(1 + exp(x)), numerically stable."""
    if not is_node(x):
        return np.logaddexp(np.zeros_like(x), x)
    s = _sigmoid_raw(x.value)
    return Node(np.logaddexp(np.zeros_like(x.value), x.value), (x,), (lambda g: g * s,))


def _log_softmax_raw(x):
    shifted = x - np.max(x, axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def log_softmax(x):
    """Log-probabilities along the last axis."""
    if not is_node(x):
        return _log_softmax_raw(x)
    ls = _log_softmax_raw(x.value)
    p = np.exp(ls)
    return Node(ls, (x,), (lambda g: g - p * np.sum(g, axis=-1, keepdims=True),))


def softmax(x):
    if not is_node(x):
        return np.exp(_log_softmax_raw(x))
    return exp(log_softmax(x))


def pick(x, idx):
    """Gather one entry per row along the last axis: out[...] = x[..., idx[...]]."""
    idx = np.asarray(idx, dtype=np.intp)
    if not is_node(x):
        return np.take_along_axis(x, idx[..., None], axis=-1)[..., 0]
    val = np.take_along_axis(x.value, idx[..., None], axis=-1)[..., 0]

    def vjp(g):
        out = np.zeros_like(x.value)
        np.put_along_axis(out, idx[..., None], g[..., None], axis=-1)
        return out

    return Node(val, (x,), (vjp,))


def reshape(x, shape):
    if not is_node(x):
        return np.reshape(x, shape)
    old = x.value.shape
    return Node(x.value.reshape(shape), (x,), (lambda g: g.reshape(old),))


def sum_all(x):
    if not is_node(x):
        return np.sum(x)
    shape = x.value.shape
    return Node(np.sum(x.value), (x,), (lambda g: np.broadcast_to(g, shape).copy(),))


def sum_axis(x, axis: int, keepdims: bool = False):
    if not is_node(x):
        return np.sum(x, axis=axis, keepdims=keepdims)
    val = np.sum(x.value, axis=axis, keepdims=keepdims)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, x.value.shape).copy()

    return Node(val, (x,), (vjp,))


def _topo_order(root: Node) -> list[Node]:
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
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


def backward_map(root: Node) -> dict[int, np.ndarray]:
    """Gradients of the scalar `root` keyed by id(node) for every tape node.

    The replay order is the deterministic reverse topological order of the
    recorded graph, so repeated calls produce bit-identical gradients.
    """
    if root.value.shape != ():
        raise ValueError("backward expects a scalar root")
    grads: dict[int, np.ndarray] = {id(root): np.ones(())}
    for node in reversed(_topo_order(root)):
        g = grads.get(id(node))
        if g is None:
            continue
        for parent, vjp in zip(node.parents, node.vjps):
            contribution = vjp(g)
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + contribution
            else:
                grads[key] = contribution
    return grads


def backward(root: Node, wrt: Sequence[Node]) -> list[np.ndarray]:
    """Gradient of the scalar `root` with respect to each node in `wrt`."""
    grads = backward_map(root)
    return [np.asarray(grads.get(id(w), np.zeros_like(w.value))) for w in wrt]


class ParameterSet:
    """Named parameter arrays with a canonical flat-vector layout."""

    def __init__(self, arrays: dict[str, np.ndarray]):
        self._names = list(arrays.keys())
        self._arrays = {k: np.asarray(v, dtype=np.float64) for k, v in arrays.items()}

    @property
    def names(self) -> list[str]:
        return list(self._names)

    def __getitem__(self, name: str) -> np.ndarray:
        return self._arrays[name]

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        if name not in self._arrays:
            raise KeyError(name)
        if self._arrays[name].shape != np.shape(value):
            raise ValueError(f"shape mismatch for {name}")
        self._arrays[name] = np.asarray(value, dtype=np.float64)

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {k: v.shape for k, v in self._arrays.items()}

    @property
    def size(self) -> int:
        return sum(v.size for v in self._arrays.values())

    def flat(self) -> np.ndarray:
        return np.concatenate([self._arrays[k].ravel() for k in self._names])

    def assign_flat(self, theta: np.ndarray) -> None:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.size,):
            raise ValueError(f"expected flat vector of length {self.size}")
        offset = 0
        for k in self._names:
            arr = self._arrays[k]
            self._arrays[k] = theta[offset:offset + arr.size].reshape(arr.shape).copy()
            offset += arr.size

    def copy(self) -> "ParameterSet":
        return ParameterSet({k: v.copy() for k, v in self._arrays.items()})

    def as_arrays(self) -> dict[str, np.ndarray]:
        return {k: self._arrays[k] for k in self._names}

    def as_nodes(self) -> dict[str, Node]:
        return {k: Node(self._arrays[k]) for k in self._names}

    def flat_grad(self, nodes: dict[str, Node], grads: dict[int, np.ndarray]) -> np.ndarray:
        parts = []
        for k in self._names:
            g = grads.get(id(nodes[k]))
            if g is None:
                g = np.zeros_like(self._arrays[k])
            parts.append(np.asarray(g).ravel())
        return np.concatenate(parts)
