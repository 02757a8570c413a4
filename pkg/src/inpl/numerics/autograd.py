"""Tape-free reverse-mode differentiation over numpy arrays.

Each :class:`Tensor` records its parents and a closure that pushes the
upstream gradient back to them. ``backward`` walks the graph in reverse
topological order. Only the handful of ops the classifier and its losses
need are provided.
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(grad, shape):
    # sum out the axes numpy broadcasting added or stretched
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    # -- graph construction -------------------------------------------------

    @staticmethod
    def _wrap(x, like=None):
        if isinstance(x, Tensor):
            return x
        dtype = like.dtype if like is not None else None
        return Tensor(np.asarray(x, dtype=dtype))

    def _child(self, data, parents, backward):
        needs = any(p.requires_grad for p in parents)
        if not needs:
            return Tensor(data)
        return Tensor(data, True, parents, backward)

    def __add__(self, other):
        other = Tensor._wrap(other, self.data)
        out_data = self.data + other.data

        def backward(g):
            return (_unbroadcast(g, self.shape), _unbroadcast(g, other.shape))

        return self._child(out_data, (self, other), backward)

    __radd__ = __add__

    def __neg__(self):
        return self._child(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other):
        other = Tensor._wrap(other, self.data)
        out_data = self.data - other.data

        def backward(g):
            return (_unbroadcast(g, self.shape), _unbroadcast(-g, other.shape))

        return self._child(out_data, (self, other), backward)

    def __rsub__(self, other):
        return Tensor._wrap(other, self.data) - self

    def __mul__(self, other):
        other = Tensor._wrap(other, self.data)
        out_data = self.data * other.data

        def backward(g):
            return (
                _unbroadcast(g * other.data, self.shape),
                _unbroadcast(g * self.data, other.shape),
            )

        return self._child(out_data, (self, other), backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return self * (1.0 / other)

    def __matmul__(self, other):
        other = Tensor._wrap(other, self.data)
        out_data = self.data @ other.data

        def backward(g):
            return (g @ other.data.T, self.data.T @ g)

        return self._child(out_data, (self, other), backward)

    def __getitem__(self, idx):
        out_data = self.data[idx]

        def backward(g):
            full = np.zeros_like(self.data)
            np.add.at(full, idx, g)
            return (full,)

        return self._child(out_data, (self,), backward)

    def relu(self):
        mask = self.data > 0
        return self._child(self.data * mask, (self,), lambda g: (g * mask,))

    def exp(self):
        out_data = np.exp(self.data)
        return self._child(out_data, (self,), lambda g: (g * out_data,))

    def log(self):
        x = self.data
        return self._child(np.log(x), (self,), lambda g: (g / x,))

    def sum(self, axis=None, keepdims=False):
        out_data = self.data.sum(axis=axis, keepdims=keepdims)

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, self.shape).copy(),)

        return self._child(out_data, (self,), backward)

    def mean(self, axis=None):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis) * (1.0 / n)

    def logsumexp(self, axis=-1, T=1.0):
        """``T * log(sum(exp(x / T)))`` along ``axis`` with max-shift."""
        x = self.data
        m = x.max(axis=axis, keepdims=True)
        z = np.exp((x - m) / T)
        s = z.sum(axis=axis, keepdims=True)
        out_data = np.squeeze(m + T * np.log(s), axis=axis)
        soft = z / s

        def backward(g):
            return (np.expand_dims(g, axis) * soft,)

        return self._child(out_data, (self,), backward)

    def take_rows(self, cols):
        """Pick ``x[i, cols[i]]`` for each row ``i``."""
        rows = np.arange(self.data.shape[0])
        cols = np.asarray(cols)
        out_data = self.data[rows, cols]

        def backward(g):
            full = np.zeros_like(self.data)
            full[rows, cols] = g
            return (full,)

        return self._child(out_data, (self,), backward)

    # -- differentiation ----------------------------------------------------

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() needs a scalar output")
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

        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg


def concat_rows(tensors):
    """Stack tensors along axis 0, routing gradients back by row span."""
    data = np.concatenate([t.data for t in tensors], axis=0)
    bounds = np.cumsum([0] + [t.shape[0] for t in tensors])

    def backward(g):
        return tuple(g[bounds[i] : bounds[i + 1]] for i in range(len(tensors)))

    needs = any(t.requires_grad for t in tensors)
    if not needs:
        return Tensor(data)
    return Tensor(data, True, tuple(tensors), backward)
