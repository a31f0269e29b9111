"""A small reverse-mode autodiff over float64 numpy arrays.

Only the operations the PNA model needs are provided. Each op records its parents and a
closure that pushes the output gradient back to them; ``Tensor.backward`` walks the tape
in reverse topological order.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        # out-of-place so a gradient array shared between parents is never mutated
        self.grad = g if self.grad is None else self.grad + g

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a gradient needs a scalar output")
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
        self._accumulate(grad)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                if node._parents:
                    # interior gradients are no longer needed
                    node.grad = None


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents, backward) -> Tensor:
    parents = tuple(p for p in parents if p.requires_grad)
    if not parents:
        return Tensor(data)
    return Tensor(data, True, parents, backward)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# --------------------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)

    def back(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _result(a.data + b.data, (a, b), back)


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)

    def back(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return _result(a.data - b.data, (a, b), back)


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)

    def back(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _result(a.data * b.data, (a, b), back)


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0.0)
    return _result(out, (x,), lambda g: x._accumulate(g * (out > 0)))


def sqrt(x: Tensor) -> Tensor:
    out = np.sqrt(x.data)
    return _result(out, (x,), lambda g: x._accumulate(g * 0.5 / out))


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    return _result(x.data.reshape(shape), (x,), lambda g: x._accumulate(g.reshape(old)))


def concat(xs, axis=-1) -> Tensor:
    xs = [_wrap(x) for x in xs]
    sizes = [x.shape[axis] for x in xs]
    cuts = np.cumsum(sizes)[:-1]

    def back(g):
        for x, part in zip(xs, np.split(g, cuts, axis=axis)):
            if x.requires_grad:
                x._accumulate(part)

    return _result(np.concatenate([x.data for x in xs], axis=axis), xs, back)


# --------------------------------------------------------------------------- linear maps


def affine(x: Tensor, W: Tensor, b: Tensor | None = None) -> Tensor:
    """x (..., a) @ W (a, b) + b."""
    out = x.data @ W.data
    if b is not None:
        out = out + b.data

    def back(g):
        g2 = g.reshape(-1, g.shape[-1])
        if W.requires_grad:
            W._accumulate(x.data.reshape(-1, x.shape[-1]).T @ g2)
        if b is not None and b.requires_grad:
            b._accumulate(g2.sum(axis=0))
        if x.requires_grad:
            x._accumulate(g @ W.data.T)

    return _result(out, (x, W) if b is None else (x, W, b), back)


def transpose(x: Tensor, axes) -> Tensor:
    inverse = np.argsort(axes)
    return _result(
        np.ascontiguousarray(x.data.transpose(axes)),
        (x,),
        lambda g: x._accumulate(np.ascontiguousarray(g.transpose(inverse))),
    )


def spmm(A: sp.csr_matrix, x: Tensor) -> Tensor:
    """Constant sparse matrix times x along the leading axis (readout pooling)."""
    tail = x.shape[1:]
    flat = x.data.reshape(x.shape[0], -1)
    out = np.asarray(A @ flat).reshape((A.shape[0],) + tail)
    AT = A.T.tocsr()

    def back(g):
        x._accumulate(np.asarray(AT @ g.reshape(g.shape[0], -1)).reshape(x.shape))

    return _result(out, (x,), back)


# --------------------------------------------------------------------------- normalization and loss


def batch_norm_train(x: Tensor, gamma: Tensor, beta: Tensor, eps: float):
    """Normalize each column over rows with the batch's own statistics.

    Returns (output, batch mean, biased batch variance)."""
    mu = x.data.mean(axis=0)
    var = x.data.var(axis=0)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    n = x.shape[0]

    def back(g):
        if gamma.requires_grad:
            gamma._accumulate((g * xhat).sum(axis=0))
        if beta.requires_grad:
            beta._accumulate(g.sum(axis=0))
        if x.requires_grad:
            dxhat = g * gamma.data
            x._accumulate(
                inv / n * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
            )

    return _result(xhat * gamma.data + beta.data, (x, gamma, beta), back), mu, var


def mean_abs_error(pred: Tensor, target: np.ndarray) -> Tensor:
    diff = pred.data - target
    n = diff.size
    return _result(np.abs(diff).mean(), (pred,), lambda g: pred._accumulate(g * np.sign(diff) / n))


def total(x: Tensor) -> Tensor:
    return _result(x.data.sum(), (x,), lambda g: x._accumulate(np.broadcast_to(g, x.shape)))
