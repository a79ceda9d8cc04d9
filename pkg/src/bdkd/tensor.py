"""Dense float64 tensors with reverse-mode automatic differentiation.

The engine is deliberately small: enough arithmetic to express MLP
forwards, temperature softmax and the KL-based losses in this package,
with analytic gradients for all of it. Operations build an implicit
tape (the DAG of ``_parents`` edges); ``Tensor.backward`` walks it once
in reverse topological order and accumulates gradients on leaves.

Conventions:

* everything is float64,
* broadcasting follows numpy, restricted in practice to scalars, row
  vectors against matrices and column vectors against matrices; the
  backward pass sums gradients over broadcast axes,
* gradients accumulate across repeated ``backward`` calls; call
  ``zero_grad`` between steps,
* tensors with ``requires_grad=False`` never enter the tape and never
  receive a ``.grad``.
"""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np


def _sum_to(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce ``grad`` back to ``shape`` by summing over broadcast axes."""
    if grad.shape == shape:
        return grad
    # Leading axes added by broadcasting.
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    # Axes of size 1 that were expanded.
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """A float64 array that optionally participates in the gradient tape."""

    __slots__ = ("data", "requires_grad", "grad", "_backward", "_parents")

    # Make numpy defer to the reflected operators below instead of
    # elementwise-coercing this object into an object-dtype array.
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._backward: Callable | None = None
        self._parents: tuple[Tensor, ...] = ()

    # ------------------------------------------------------------------
    # construction helpers
    # ------------------------------------------------------------------

    @staticmethod
    def _wrap(other) -> "Tensor":
        return other if isinstance(other, Tensor) else Tensor(other)

    @staticmethod
    def _node(data: np.ndarray, parents: Iterable["Tensor"], backward: Callable) -> "Tensor":
        """Create an op result. Constant inputs produce a constant output."""
        tracked = tuple(p for p in parents if p.requires_grad)
        out = Tensor(data, requires_grad=bool(tracked))
        if tracked:
            out._parents = tracked
            out._backward = backward
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() requires a scalar tensor, got shape {self.data.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """Value-identical tensor cut from the tape (shares no gradient path)."""
        return Tensor(self.data.copy(), requires_grad=False)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    # ------------------------------------------------------------------
    # elementwise arithmetic
    # ------------------------------------------------------------------

    def __add__(self, other) -> "Tensor":
        other = self._wrap(other)
        a, b = self, other

        def backward(g, acc):
            _accumulate(acc, a, _sum_to(g, a.data.shape))
            _accumulate(acc, b, _sum_to(g, b.data.shape))

        return self._node(a.data + b.data, (a, b), backward)

    __radd__ = __add__

    def __sub__(self, other) -> "Tensor":
        other = self._wrap(other)
        a, b = self, other

        def backward(g, acc):
            _accumulate(acc, a, _sum_to(g, a.data.shape))
            _accumulate(acc, b, _sum_to(-g, b.data.shape))

        return self._node(a.data - b.data, (a, b), backward)

    def __rsub__(self, other) -> "Tensor":
        return self._wrap(other).__sub__(self)

    def __mul__(self, other) -> "Tensor":
        other = self._wrap(other)
        a, b = self, other

        def backward(g, acc):
            _accumulate(acc, a, _sum_to(g * b.data, a.data.shape))
            _accumulate(acc, b, _sum_to(g * a.data, b.data.shape))

        return self._node(a.data * b.data, (a, b), backward)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = self._wrap(other)
        a, b = self, other
        if np.any(b.data == 0.0):
            raise ValueError("division by zero")

        def backward(g, acc):
            _accumulate(acc, a, _sum_to(g / b.data, a.data.shape))
            _accumulate(acc, b, _sum_to(-g * a.data / (b.data * b.data), b.data.shape))

        return self._node(a.data / b.data, (a, b), backward)

    def __rtruediv__(self, other) -> "Tensor":
        return self._wrap(other).__truediv__(self)

    def __neg__(self) -> "Tensor":
        a = self

        def backward(g, acc):
            _accumulate(acc, a, -g)

        return self._node(-a.data, (a,), backward)

    def exp(self) -> "Tensor":
        a = self
        out_data = np.exp(a.data)

        def backward(g, acc):
            _accumulate(acc, a, g * out_data)

        return self._node(out_data, (a,), backward)

    def log(self) -> "Tensor":
        if np.any(self.data <= 0.0):
            raise ValueError("log of non-positive value")
        a = self

        def backward(g, acc):
            _accumulate(acc, a, g / a.data)

        return self._node(np.log(a.data), (a,), backward)

    def relu(self) -> "Tensor":
        a = self
        mask = a.data > 0.0

        def backward(g, acc):
            _accumulate(acc, a, g * mask)

        return self._node(a.data * mask, (a,), backward)

    def clamp_min(self, floor: float) -> "Tensor":
        """Elementwise max with a constant; gradient passes where unclamped."""
        a = self
        mask = a.data >= floor

        def backward(g, acc):
            _accumulate(acc, a, g * mask)

        return self._node(np.maximum(a.data, floor), (a,), backward)

    # ------------------------------------------------------------------
    # linear algebra and reductions
    # ------------------------------------------------------------------

    def matmul(self, other) -> "Tensor":
        other = self._wrap(other)
        a, b = self, other
        if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
            raise ValueError(
                f"matmul dimension mismatch: {a.data.shape} @ {b.data.shape}"
            )

        def backward(g, acc):
            _accumulate(acc, a, g @ b.data.T)
            _accumulate(acc, b, a.data.T @ g)

        return self._node(a.data @ b.data, (a, b), backward)

    __matmul__ = matmul

    def sum(self, axis: int | None = None, keepdims: bool = False) -> "Tensor":
        a = self
        if axis is None:
            def backward(g, acc):
                _accumulate(acc, a, np.broadcast_to(g, a.data.shape).copy())

            return self._node(a.data.sum(), (a,), backward)

        if not -a.data.ndim <= axis < a.data.ndim:
            raise ValueError(f"invalid reduction axis {axis} for shape {a.data.shape}")

        def backward(g, acc):
            expanded = g if keepdims else np.expand_dims(g, axis)
            _accumulate(acc, a, np.broadcast_to(expanded, a.data.shape).copy())

        return self._node(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)

    def mean(self) -> "Tensor":
        a = self
        n = a.data.size

        def backward(g, acc):
            _accumulate(acc, a, np.broadcast_to(g / n, a.data.shape).copy())

        return self._node(a.data.mean(), (a,), backward)

    # ------------------------------------------------------------------
    # backward pass
    # ------------------------------------------------------------------

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into ``.grad`` of every tracked leaf.

        ``self`` must be scalar. Repeated calls keep accumulating; callers
        own zeroing. A constant scalar (nothing on the tape) is a no-op.
        """
        if self.data.size != 1:
            raise ValueError(f"backward() requires a scalar loss, got shape {self.data.shape}")
        if not self.requires_grad:
            return

        order = _topo_order(self)
        acc: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = acc.pop(id(node), None)
            if g is None:
                continue
            if node._backward is not None:
                node._backward(g, acc)
            else:
                node.grad = g if node.grad is None else node.grad + g


def _accumulate(acc: dict, node: Tensor, grad: np.ndarray) -> None:
    if not node.requires_grad:
        return
    key = id(node)
    if key in acc:
        acc[key] = acc[key] + grad
    else:
        acc[key] = grad


def _topo_order(root: Tensor) -> list[Tensor]:
    """Tape for one backward pass: parents precede children, each node once."""
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
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def zero_grad(params: Iterable[Tensor]) -> None:
    """Drop accumulated gradients on the given tensors."""
    for p in params:
        p.grad = None


def row_max(t: Tensor) -> np.ndarray:
    """Per-row maximum as a gradient-free column, for softmax/logsumexp shifts.

    The shift cancels exactly in softmax and logsumexp, so treating it as a
    constant leaves both values and gradients unchanged.
    """
    if t.data.ndim != 2:
        raise ValueError(f"row_max expects a 2-d tensor, got shape {t.data.shape}")
    return t.data.max(axis=1, keepdims=True)
