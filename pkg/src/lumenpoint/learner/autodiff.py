"""A small reverse-mode autodiff engine over float64 numpy arrays.

Only the operations the point-cloud regressor needs are provided. Every op
records its parents and a closure that maps the output gradient to parent
gradients; :meth:`Tensor.backward` walks the graph in reverse topological
order once, then releases it.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse

from ..errors import GraphConsumed


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self.grad = np.zeros_like(self.data) if requires_grad and not _parents else None
        self._parents = _parents if self.requires_grad else ()
        self._backward = _backward if self.requires_grad else None
        self._consumed = False

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0.0

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)

        def back(g):
            return _unbroadcast(g, self.shape), _unbroadcast(g, other.shape)
        return Tensor(self.data + other.data, _parents=(self, other), _backward=back)

    __radd__ = __add__

    def __neg__(self):
        return Tensor(-self.data, _parents=(self,), _backward=lambda g: (-g,))

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)

        def back(g):
            return (_unbroadcast(g * other.data, self.shape),
                    _unbroadcast(g * self.data, other.shape))
        return Tensor(self.data * other.data, _parents=(self, other), _backward=back)

    __rmul__ = __mul__

    def __matmul__(self, other):
        other = as_tensor(other)
        a, b = self.data, other.data

        if b.ndim == 2 and a.ndim > 2:
            # shared weight matrix: fold all leading axes into one GEMM
            a2 = a.reshape(-1, a.shape[-1])
            out = (a2 @ b).reshape(a.shape[:-1] + (b.shape[1],))

            def back(g):
                g2 = g.reshape(-1, g.shape[-1])
                return (g2 @ b.T).reshape(a.shape), a2.T @ g2
            return Tensor(out, _parents=(self, other), _backward=back)

        def back(g):
            if b.ndim == 2:
                return g @ b.T, a.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            return (_unbroadcast(g @ np.swapaxes(b, -1, -2), a.shape),
                    _unbroadcast(np.swapaxes(a, -1, -2) @ g, b.shape))
        return Tensor(a @ b, _parents=(self, other), _backward=back)

    # -- elementwise -------------------------------------------------------

    def relu(self):
        mask = self.data > 0
        return Tensor(self.data * mask, _parents=(self,), _backward=lambda g: (g * mask,))

    def square(self):
        return Tensor(self.data ** 2, _parents=(self,),
                      _backward=lambda g: (2.0 * self.data * g,))

    # -- shape -------------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        shape = self.shape

        def back(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)
        return Tensor(self.data.sum(axis=axis, keepdims=keepdims),
                      _parents=(self,), _backward=back)

    def mean(self, axis=None, keepdims: bool = False):
        n = self.data.size if axis is None else np.prod(
            [self.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape):
        old = self.shape
        return Tensor(self.data.reshape(*shape), _parents=(self,),
                      _backward=lambda g: (g.reshape(old),))

    def swapaxes(self, a: int, b: int):
        return Tensor(np.swapaxes(self.data, a, b), _parents=(self,),
                      _backward=lambda g: (np.swapaxes(g, a, b),))

    # -- graph -------------------------------------------------------------

    def backward(self, grad=None) -> None:
        """Accumulate d(self)/d(leaf) into every leaf's ``grad``.

        The graph is freed afterwards; a second call raises GraphConsumed.
        """
        if self._consumed:
            raise GraphConsumed("backward already ran on this graph; run forward again")
        if grad is None:
            grad = np.ones_like(self.data)
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        grads = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if node._backward is None:
                if g is not None and node.grad is not None:
                    node.grad += g
                continue
            if g is not None:
                for p, pg in zip(node._parents, node._backward(g)):
                    if not p.requires_grad:
                        continue
                    if id(p) in grads:
                        grads[id(p)] = grads[id(p)] + pg
                    else:
                        grads[id(p)] = pg
            node._backward = None
            node._parents = ()
            node._consumed = True


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def gather_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    """Batched row gather: ``out[b, c, j] = x[b, idx[b, c, j]]``.

    ``x`` has shape (B, N, F) and ``idx`` (B, ...). The backward pass is a
    scatter-add done as a sparse matrix product with a fixed summation order.
    """
    bsz, n, f = x.shape
    b = np.arange(bsz).reshape((-1,) + (1,) * (idx.ndim - 1))
    rows = (idx + b * n).reshape(-1)

    def back(g):
        g2 = g.reshape(-1, f)
        scatter = sparse.csr_matrix((np.ones(len(rows)), (rows, np.arange(len(rows)))),
                                    shape=(bsz * n, len(rows)))
        return ((scatter @ g2).reshape(bsz, n, f),)
    return Tensor(x.data[b, idx], _parents=(x,), _backward=back)
