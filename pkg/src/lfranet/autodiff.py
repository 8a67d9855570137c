"""Dense tensors and the reverse-mode differentiation tape.

A :class:`Tensor` wraps a contiguous float32/float64 ndarray.  Tensors
produced by operations record their parents and a backward rule, forming an
acyclic tape; :meth:`Tensor.backward` walks it in reverse topological order
and accumulates gradients into every reachable node that requires them.

Tensors are treated as immutable values once created.  Each tape is
single-threaded; independent tapes may run concurrently.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ShapeMismatchError

_FLOAT_DTYPES = (np.float32, np.float64)

_grad_enabled = True


def is_grad_enabled() -> bool:
    return _grad_enabled


class no_grad:
    """Context manager that suppresses tape construction (used for inference)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def _sum_to_shape(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to the operand's shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


class Tensor:
    """N-dimensional float array enrolled in the differentiation tape."""

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float32)
        if arr.size == 0:
            raise ValueError(f"tensor extents must all be >= 1, got shape {arr.shape}")
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = bool(requires_grad)
        self._grad: Optional[np.ndarray] = None
        self._parents: tuple = ()
        self._backward: Optional[Callable] = None

    # -- basic introspection ------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def grad(self) -> Optional[np.ndarray]:
        if self._grad is None and self.requires_grad:
            self._grad = np.zeros_like(self.data)
        return self._grad

    @grad.setter
    def grad(self, value):
        self._grad = value

    def zero_grad(self) -> None:
        self._grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeMismatchError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}{flag})"

    # -- tape ----------------------------------------------------------------

    def backward(self) -> None:
        """Accumulate d(self)/d(node) into ``grad`` of every reachable node.

        Repeated calls keep accumulating; call ``zero_grad`` between steps.
        """
        if self.data.size != 1:
            raise ShapeMismatchError(f"backward() root must be scalar-valued, got shape {self.shape}")
        # Iterative post-order over the requires-grad subgraph.  Nodes go
        # white -> gray (expanded) -> black (emitted); a node is emitted only
        # after every input above it on the stack has been, so reversed(order)
        # always visits consumers before producers, even through diamonds.
        order = []
        state: dict = {}
        stack: list = [self]
        while stack:
            node = stack[-1]
            st = state.get(id(node), 0)
            if st == 0:
                state[id(node)] = 1
                for p in node._parents:
                    if p.requires_grad and state.get(id(p), 0) == 0:
                        stack.append(p)
            elif st == 1:
                stack.pop()
                state[id(node)] = 2
                order.append(node)
            else:
                stack.pop()
        flows = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = flows.pop(id(node), None)
            if g is None:
                continue
            if node._grad is None:
                node._grad = np.zeros_like(node.data)
            node._grad += g
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                pid = id(parent)
                flows[pid] = pg if pid not in flows else flows[pid] + pg

    # -- arithmetic ----------------------------------------------------------

    def _const(self, other) -> np.ndarray:
        return np.asarray(other, dtype=self.data.dtype)

    def _broadcast(self, op, other) -> np.ndarray:
        try:
            return op(self.data, other)
        except ValueError:
            raise ShapeMismatchError(
                f"incompatible shapes {self.shape} and {np.asarray(other).shape}"
            ) from None

    def __add__(self, other):
        if isinstance(other, Tensor):
            out = self._broadcast(np.add, other.data)

            def _bwd(g):
                return _sum_to_shape(g, self.shape), _sum_to_shape(g, other.shape)

            return make_node(out, (self, other), _bwd)
        c = self._const(other)
        out = self._broadcast(np.add, c)

        def _bwd(g):
            return (_sum_to_shape(g, self.shape),)

        return make_node(out, (self,), _bwd)

    __radd__ = __add__

    def __mul__(self, other):
        if isinstance(other, Tensor):
            out = self._broadcast(np.multiply, other.data)
            a, b = self, other

            def _bwd(g):
                ga = _sum_to_shape(g * b.data, a.shape) if a.requires_grad else None
                gb = _sum_to_shape(g * a.data, b.shape) if b.requires_grad else None
                return ga, gb

            return make_node(out, (self, other), _bwd)
        c = self._const(other)
        out = self._broadcast(np.multiply, c)

        def _bwd(g):
            return (_sum_to_shape(g * c, self.shape),)

        return make_node(out, (self,), _bwd)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other if isinstance(other, Tensor) else -self._const(other))

    def __rsub__(self, other):
        return (-self) + self._const(other)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            out = self._broadcast(np.divide, other.data)
            a, b = self, other

            def _bwd(g):
                ga = _sum_to_shape(g / b.data, a.shape) if a.requires_grad else None
                gb = _sum_to_shape(-g * a.data / (b.data * b.data), b.shape) if b.requires_grad else None
                return ga, gb

            return make_node(out, (self, other), _bwd)
        return self * (1.0 / float(other))

    def __rtruediv__(self, other):
        c = self._const(other)
        out = self._broadcast(lambda a, b: np.divide(b, a), c)

        def _bwd(g):
            return (_sum_to_shape(-g * c / (self.data * self.data), self.shape),)

        return make_node(out, (self,), _bwd)

    def sum(self) -> "Tensor":
        """Full reduction to a scalar tensor (the usual loss root)."""
        out = self.data.sum()

        def _bwd(g):
            return (np.broadcast_to(g, self.data.shape),)

        return make_node(np.asarray(out), (self,), _bwd)


def make_node(data: np.ndarray, parents: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    """Wrap an op result; records the tape edge only when gradients can flow."""
    if _grad_enabled and any(p.requires_grad for p in parents):
        t = Tensor(data)
        t.requires_grad = True
        t._parents = tuple(parents)
        t._backward = backward_fn
        return t
    return Tensor(data)


class Parameter(Tensor):
    """A named, trainable leaf tensor carried in a model's registry."""

    def __init__(self, data, name: Optional[str] = None, trainable: bool = True, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.name = name
        self.trainable = trainable
