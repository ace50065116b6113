"""Vectorized reverse-mode autodiff on numpy arrays.

A Tape records primitive operations (affine, sin, cos, sigmoid, power,
elementwise arithmetic, reductions, concatenation) in topological order.
backward() walks the tape in reverse and accumulates adjoints into leaf
variables. Spatial derivatives of networks are built as explicit tangent
streams out of the same primitives, so reverse mode through them yields
exact parameter gradients of losses that consume spatial jacobians.

Everything is float64; single precision only appears at checkpoint export.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class Node:
    """One value on the tape. Leaves carry parameters or constants."""

    __slots__ = ("value", "parents", "vjp", "grad", "requires_grad")

    def __init__(self, value, parents=(), vjp=None, requires_grad=False):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = parents
        self.vjp = vjp  # grad_out -> tuple of parent adjoint contributions
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)

    @property
    def shape(self):
        return self.value.shape


class Tape:
    """Ordered operation record; single-writer, one backward pass at a time."""

    def __init__(self):
        self.nodes: list[Node] = []

    def _track(self, node: Node) -> Node:
        if node.requires_grad:
            self.nodes.append(node)
        return node

    def leaf(self, value, requires_grad=False) -> Node:
        return self._track(Node(value, requires_grad=requires_grad))

    def constant(self, value) -> Node:
        return Node(value)

    def reset(self):
        """Recycle the tape between iterations; leaves must be re-created."""
        self.nodes.clear()

    # -- primitives ------------------------------------------------------

    def add(self, a: Node, b: Node) -> Node:
        def vjp(g):
            return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

        return self._track(Node(a.value + b.value, (a, b), vjp))

    def sub(self, a: Node, b: Node) -> Node:
        def vjp(g):
            return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

        return self._track(Node(a.value - b.value, (a, b), vjp))

    def mul(self, a: Node, b: Node) -> Node:
        def vjp(g):
            return _unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)

        return self._track(Node(a.value * b.value, (a, b), vjp))

    def div(self, a: Node, b: Node) -> Node:
        def vjp(g):
            return (
                _unbroadcast(g / b.value, a.shape),
                _unbroadcast(-g * a.value / b.value**2, b.shape),
            )

        return self._track(Node(a.value / b.value, (a, b), vjp))

    def scale(self, a: Node, c: float) -> Node:
        return self._track(Node(a.value * c, (a,), lambda g: (g * c,)))

    def matmul(self, a: Node, b: Node) -> Node:
        def vjp(g):
            return g @ b.value.T, a.value.T @ g

        return self._track(Node(a.value @ b.value, (a, b), vjp))

    def sin(self, a: Node) -> Node:
        return self._track(Node(np.sin(a.value), (a,), lambda g: (g * np.cos(a.value),)))

    def cos(self, a: Node) -> Node:
        return self._track(Node(np.cos(a.value), (a,), lambda g: (-g * np.sin(a.value),)))

    def sigmoid(self, a: Node) -> Node:
        s = 1.0 / (1.0 + np.exp(-a.value))
        return self._track(Node(s, (a,), lambda g: (g * s * (1.0 - s),)))

    def relu(self, a: Node) -> Node:
        mask = a.value > 0.0
        return self._track(Node(a.value * mask, (a,), lambda g: (g * mask,)))

    def power(self, a: Node, exponent: float) -> Node:
        def vjp(g):
            return (g * exponent * a.value ** (exponent - 1.0),)

        return self._track(Node(a.value**exponent, (a,), vjp))

    def sum(self, a: Node) -> Node:
        return self._track(Node(a.value.sum(), (a,), lambda g: (np.full(a.shape, g),)))

    def mean(self, a: Node) -> Node:
        n = a.value.size
        return self._track(Node(a.value.mean(), (a,), lambda g: (np.full(a.shape, g / n),)))

    def concat(self, parts: Sequence[Node], axis: int = -1) -> Node:
        sizes = [p.value.shape[axis] for p in parts]
        offsets = np.cumsum([0] + sizes)

        def vjp(g):
            return tuple(
                np.take(g, np.arange(offsets[i], offsets[i + 1]), axis=axis)
                for i in range(len(parts))
            )

        return self._track(Node(np.concatenate([p.value for p in parts], axis=axis), tuple(parts), vjp))

    def take_col(self, a: Node, col: int) -> Node:
        def vjp(g):
            out = np.zeros(a.shape)
            out[:, col] = g
            return (out,)

        return self._track(Node(a.value[:, col], (a,), vjp))


def backward(loss: Node, tape: Tape) -> None:
    """Reverse pass from a scalar root; adjoints accumulate into .grad."""
    if loss.value.ndim != 0:
        raise ValueError(f"backward root must be a scalar, got shape {loss.value.shape}")
    for node in tape.nodes:
        node.grad = None
    loss.grad = np.ones(())
    for node in reversed(tape.nodes):
        if node.grad is None or node.vjp is None:
            continue
        contribs = node.vjp(node.grad)
        for parent, contrib in zip(node.parents, contribs):
            if not parent.requires_grad:
                continue
            if parent.grad is None:
                parent.grad = np.array(contrib, dtype=np.float64, copy=True)
            else:
                parent.grad += contrib


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to the original operand shape."""
    grad = np.asarray(grad)
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def grad_check(
    lossfn: Callable[[Sequence[np.ndarray]], float],
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    h: float = 1e-6,
) -> float:
    """Max relative error between analytic grads and central differences.

    lossfn must be deterministic; NaN losses surface as a failed (inf) check.
    """
    worst = 0.0
    params = [np.array(p, dtype=np.float64) for p in params]
    for t, grad in enumerate(grads):
        it = np.nditer(params[t], flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = params[t][idx]
            params[t][idx] = orig + h
            lp = lossfn(params)
            params[t][idx] = orig - h
            lm = lossfn(params)
            params[t][idx] = orig
            if not (np.isfinite(lp) and np.isfinite(lm)):
                return float("inf")
            fd = (lp - lm) / (2.0 * h)
            err = abs(grad[idx] - fd) / max(1e-12, abs(fd))
            worst = max(worst, err)
    return worst
