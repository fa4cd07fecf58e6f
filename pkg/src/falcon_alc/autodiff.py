"""Reverse-mode automatic differentiation over numpy arrays.

A :class:`Graph` is an append-only tape. Every operation appends a
:class:`Node` whose parents were created earlier, so walking the tape
backwards is a valid reverse topological order and no sort is needed.

Non-smooth points follow one rule everywhere: on a tie the left argument
(or the first index along an axis) receives the whole gradient.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

VJP = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Node:
    __slots__ = ("graph", "value", "parents", "vjp", "grad", "requires_grad", "name")

    def __init__(self, graph, value, parents=(), vjp=None, requires_grad=False, name=None):
        self.graph = graph
        self.value = value
        self.parents = parents
        self.vjp = vjp
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"<Node{label} shape={self.shape}>"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(self.graph.lift(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)


class Graph:
    """Append-only tape of nodes."""

    def __init__(self):
        self.nodes: list[Node] = []

    def _append(self, node: Node) -> Node:
        self.nodes.append(node)
        return node

    def leaf(self, value, name: str | None = None) -> Node:
        """A differentiable input (a parameter)."""
        return self._append(
            Node(self, np.asarray(value, dtype=np.float64), requires_grad=True, name=name)
        )

    def constant(self, value, name: str | None = None) -> Node:
        return self._append(Node(self, np.asarray(value, dtype=np.float64), name=name))

    def lift(self, x) -> Node:
        if isinstance(x, Node):
            if x.graph is not self:
                raise ValueError("node belongs to a different graph")
            return x
        return self.constant(x)

    def op(self, value, parents: tuple[Node, ...], vjp: VJP) -> Node:
        requires = any(p.requires_grad for p in parents)
        if not requires:
            return self._append(Node(self, value))
        return self._append(Node(self, value, parents, vjp, requires_grad=True))

    def backward(self, output: Node) -> None:
        """Fill ``.grad`` of every node that ``output`` depends on.

        Leaves that did not contribute keep ``grad = None``;
        :func:`grad_of` maps that to zeros.
        """
        if output.graph is not self:
            raise ValueError("output belongs to a different graph")
        if output.value.size != 1:
            raise ValueError(f"backward needs a scalar output, got shape {output.shape}")
        for node in self.nodes:
            node.grad = None
        output.grad = np.ones_like(output.value)
        stop = self.nodes.index(output) if self.nodes[-1] is not output else len(self.nodes) - 1
        for node in reversed(self.nodes[: stop + 1]):
            if node.grad is None or node.vjp is None:
                continue
            for parent, g in zip(node.parents, node.vjp(node.grad)):
                if g is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = g
                else:
                    parent.grad = parent.grad + g


def grad_of(node: Node) -> np.ndarray:
    return np.zeros_like(node.value) if node.grad is None else node.grad


def backward(graph: Graph, output: Node, leaves: dict[str, Node]) -> dict[str, np.ndarray]:
    """Run reverse mode and return gradients keyed like ``leaves``."""
    graph.backward(output)
    return {k: grad_of(v) for k, v in leaves.items()}


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _pair(a, b) -> tuple[Node, Node]:
    if isinstance(a, Node):
        return a, a.graph.lift(b)
    return b.graph.lift(a), b


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------


def add(a, b) -> Node:
    a, b = _pair(a, b)
    sa, sb = a.shape, b.shape
    return a.graph.op(
        a.value + b.value, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb))
    )


def sub(a, b) -> Node:
    a, b = _pair(a, b)
    sa, sb = a.shape, b.shape
    return a.graph.op(
        a.value - b.value, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb))
    )


def mul(a, b) -> Node:
    a, b = _pair(a, b)
    av, bv = a.value, b.value
    return a.graph.op(
        av * bv,
        (a, b),
        lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)),
    )


def neg(a: Node) -> Node:
    return a.graph.op(-a.value, (a,), lambda g: (-g,))


def one_minus(a: Node) -> Node:
    return a.graph.op(1.0 - a.value, (a,), lambda g: (-g,))


def maximum(a, b) -> Node:
    """Elementwise max; ties send the gradient to ``a``."""
    a, b = _pair(a, b)
    left = a.value >= b.value
    sa, sb = a.shape, b.shape
    return a.graph.op(
        np.where(left, a.value, b.value),
        (a, b),
        lambda g: (_unbroadcast(g * left, sa), _unbroadcast(g * ~left, sb)),
    )


def minimum(a, b) -> Node:
    """Elementwise min; ties send the gradient to ``a``."""
    a, b = _pair(a, b)
    left = a.value <= b.value
    sa, sb = a.shape, b.shape
    return a.graph.op(
        np.where(left, a.value, b.value),
        (a, b),
        lambda g: (_unbroadcast(g * left, sa), _unbroadcast(g * ~left, sb)),
    )


def abs_(a: Node) -> Node:
    s = np.where(a.value >= 0, 1.0, -1.0)
    return a.graph.op(np.abs(a.value), (a,), lambda g: (g * s,))


def square(a: Node) -> Node:
    v = a.value
    return a.graph.op(v * v, (a,), lambda g: (2.0 * g * v,))


# ---------------------------------------------------------------------------
# nonlinearities
# ---------------------------------------------------------------------------


def tanh(a: Node) -> Node:
    t = np.tanh(a.value)
    return a.graph.op(t, (a,), lambda g: (g * (1.0 - t * t),))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # exp of a non-positive argument only, so no overflow for large |x|
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(a: Node) -> Node:
    s = _sigmoid(a.value)
    return a.graph.op(s, (a,), lambda g: (g * s * (1.0 - s),))


def softplus(a: Node) -> Node:
    """``ln(1 + e^x)``, computed without overflow."""
    x = a.value
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    s = _sigmoid(x)
    return a.graph.op(out, (a,), lambda g: (g * s,))


def neg_log_sigmoid(a: Node) -> Node:
    """``-ln sigmoid(x) = softplus(-x)``."""
    return softplus(neg(a))


# ---------------------------------------------------------------------------
# reductions and shape ops
# ---------------------------------------------------------------------------


def sum_(a: Node, axis=None) -> Node:
    shape = a.shape

    def vjp(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return a.graph.op(np.asarray(a.value.sum(axis=axis)), (a,), vjp)


def mean(a: Node, axis=None) -> Node:
    n = a.value.size if axis is None else a.shape[axis]
    if n == 0:
        raise ValueError("mean of an empty array")
    return mul(sum_(a, axis), 1.0 / n)


def _arg_reduce(a: Node, axis: int, pick) -> Node:
    idx = pick(a.value, axis=axis)
    val = np.take_along_axis(a.value, np.expand_dims(idx, axis), axis=axis)
    val = np.squeeze(val, axis=axis)
    shape = a.shape

    def vjp(g):
        out = np.zeros(shape)
        np.put_along_axis(out, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis)
        return (out,)

    return a.graph.op(val, (a,), vjp)


def amax(a: Node, axis: int = -1) -> Node:
    """Max along ``axis``; the first maximal element gets the gradient."""
    if a.shape[axis] == 0:
        raise ValueError("max over an empty axis")
    return _arg_reduce(a, axis, np.argmax)


def amin(a: Node, axis: int = -1) -> Node:
    """Min along ``axis``; the first minimal element gets the gradient."""
    if a.shape[axis] == 0:
        raise ValueError("min over an empty axis")
    return _arg_reduce(a, axis, np.argmin)


def reshape(a: Node, shape) -> Node:
    old = a.shape
    return a.graph.op(a.value.reshape(shape), (a,), lambda g: (g.reshape(old),))


def expand_dims(a: Node, axis: int) -> Node:
    old = a.shape
    return a.graph.op(np.expand_dims(a.value, axis), (a,), lambda g: (g.reshape(old),))


def getitem(a: Node, index) -> Node:
    shape = a.shape

    def vjp(g):
        out = np.zeros(shape)
        np.add.at(out, index, g)
        return (out,)

    return a.graph.op(np.asarray(a.value[index]), (a,), vjp)


def take(a: Node, indices, axis: int = 0) -> Node:
    """Gather along ``axis``; repeated indices accumulate gradient."""
    indices = np.asarray(indices, dtype=np.intp)
    shape = a.shape

    def vjp(g):
        out = np.zeros(shape)
        moved = np.moveaxis(out, axis, 0)
        np.add.at(moved, indices, np.moveaxis(g, axis, 0))
        return (out,)

    return a.graph.op(np.take(a.value, indices, axis=axis), (a,), vjp)


def concat(nodes: Sequence[Node], axis: int = 0) -> Node:
    graph = nodes[0].graph
    sizes = [n.shape[axis] for n in nodes]
    bounds = np.cumsum([0] + sizes)

    def vjp(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(nodes))
        )

    return graph.op(np.concatenate([n.value for n in nodes], axis=axis), tuple(nodes), vjp)


def stack(nodes: Sequence[Node], axis: int = 0) -> Node:
    return concat([expand_dims(n, axis) for n in nodes], axis=axis)


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------


def matmul(a, b) -> Node:
    a, b = _pair(a, b)
    av, bv = a.value, b.value
    if av.ndim < 1 or bv.ndim < 1:
        raise ValueError("matmul needs arrays of rank >= 1")

    def vjp(g):
        a2 = av[None, :] if av.ndim == 1 else av
        b2 = bv[:, None] if bv.ndim == 1 else bv
        g2 = g
        if av.ndim == 1:
            g2 = np.expand_dims(g2, -2)
        if bv.ndim == 1:
            g2 = np.expand_dims(g2, -1)
        ga = g2 @ np.swapaxes(b2, -1, -2)
        gb = np.swapaxes(a2, -1, -2) @ g2
        if av.ndim == 1:
            ga = ga.reshape(ga.shape[:-2] + ga.shape[-1:])
        if bv.ndim == 1:
            gb = gb.reshape(gb.shape[:-1])
        return _unbroadcast(ga, av.shape), _unbroadcast(gb, bv.shape)

    return a.graph.op(av @ bv, (a, b), vjp)


def linear(x: Node, weight: Node, bias: Node | None = None) -> Node:
    """``x @ weight.T + bias`` over the last axis of ``x``."""
    xv, wv = x.value, weight.value
    if xv.shape[-1] != wv.shape[1]:
        raise ValueError(f"linear: input width {xv.shape[-1]} != weight width {wv.shape[1]}")
    out = xv @ wv.T
    if bias is not None:
        out = out + bias.value
    lead = xv.shape[:-1]

    def vjp(g):
        g2 = g.reshape(-1, wv.shape[0])
        x2 = xv.reshape(-1, wv.shape[1])
        gx = (g2 @ wv).reshape(lead + (wv.shape[1],))
        gw = g2.T @ x2
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return x.graph.op(out, parents, vjp)
