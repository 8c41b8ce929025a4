"""Reverse-mode automatic differentiation over numpy arrays.

Every tracked operation records its parents and an adjoint function on the
output tensor; the resulting DAG is the computation tape.  ``backward``
replays adjoints in reverse topological order, visiting each node exactly
once, and accumulates gradients into every reachable tensor that requires
them.  Repeated backward calls without ``zero_grad`` keep accumulating.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractError, ShapeError

_grad_enabled = True


def grad_enabled():
    return _grad_enabled


class no_grad:
    """Context manager that disables tape recording (forward-only passes)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class Tensor:
    """N-dimensional float array with optional gradient tracking.

    Image-like data uses (N, C, H, W) layout.  Values are immutable once the
    tensor participates in a forward pass; in-place edits are reserved for
    optimizer updates on leaf parameters.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data.reshape(()))

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def astype(self, dtype):
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad)

    def backward(self):
        """Populate ``grad`` on every reachable tracked tensor.

        Only defined for scalar outputs.  Adjoints for each node are summed
        before that node's backward function runs, so every node is expanded
        exactly once.
        """
        if self.data.size != 1:
            raise ContractError("backward requires a scalar loss, got shape %r" % (self.shape,))
        order = _toposort(self)
        adjoints = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = adjoints.pop(id(node), None)
            if g is None:
                continue
            node.grad = g if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                prev = adjoints.get(id(parent))
                adjoints[id(parent)] = pg if prev is None else prev + pg

    # -- operator sugar -------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise ContractError("division only supported by python scalars")
        return mul(self, 1.0 / other)

    def __repr__(self):
        return "Tensor(shape=%r, dtype=%s, requires_grad=%s)" % (
            self.shape,
            self.data.dtype,
            self.requires_grad,
        )


def _toposort(root):
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    return order


def node(data, parents, backward):
    """Build an op output; records the adjoint only when tracking is on.

    ``backward`` maps the output adjoint to a tuple of parent adjoints
    aligned with ``parents`` (``None`` entries are skipped).
    """
    parents = tuple(parents)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out = Tensor(data, requires_grad=True)
        out._parents = parents
        out._backward = backward
        return out
    return Tensor(data)


def constant(value, like=None):
    dtype = like.dtype if like is not None else np.float64
    return Tensor(np.asarray(value, dtype=dtype))


def _lift(x, like=None):
    if isinstance(x, Tensor):
        return x
    return constant(x, like=like)


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# -- arithmetic ---------------------------------------------------------


def add(a, b):
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)
    return node(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b):
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)
    return node(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b):
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)
    return node(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def neg(a):
    return node(-a.data, (a,), lambda g: (-g,))


def absolute(a):
    # gradient at exactly 0 is 0 (sign convention)
    return node(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def square(a):
    return node(a.data * a.data, (a,), lambda g: (g * (2.0 * a.data),))


def log(a):
    return node(np.log(a.data), (a,), lambda g: (g / a.data,))


def clip(a, lo, hi):
    mask = (a.data >= lo) & (a.data <= hi)
    return node(np.clip(a.data, lo, hi), (a,), lambda g: (g * mask,))


# -- shape ops ----------------------------------------------------------


def reshape(a, shape):
    old = a.shape
    return node(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def concat(tensors, axis=1):
    tensors = tuple(tensors)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return node(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def narrow(a, axis, start, stop):
    """Slice ``[start:stop)`` along ``axis``; adjoint scatters back into zeros."""
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)

    def backward(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return node(a.data[index], (a,), backward)


def crop2d(a, top, left, height, width):
    return _crop2d_idx(a, top, left, height, width)


def _crop2d_idx(a, top, left, height, width):
    index = (slice(None), slice(None), slice(top, top + height), slice(left, left + width))

    def backward(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return node(a.data[index], (a,), backward)


def pad_reflect(a, pads):
    """Reflection-pad H and W of an (N, C, H, W) tensor.

    pads = (top, bottom, left, right).  Forward is a gather through reflected
    index maps, so the adjoint is a scatter-add through the same maps.
    """
    top, bottom, left, right = pads
    _, _, h, w = a.shape
    if top >= h or bottom >= h or left >= w or right >= w:
        raise ShapeError("reflection padding %r too large for %dx%d" % (pads, h, w))
    iy = _reflect_index(h, top, bottom)
    ix = _reflect_index(w, left, right)
    out = a.data[:, :, iy, :][:, :, :, ix]

    def backward(g):
        folded_w = np.zeros(g.shape[:3] + (w,), dtype=g.dtype)
        np.add.at(folded_w, (slice(None), slice(None), slice(None), ix), g)
        folded = np.zeros_like(a.data)
        np.add.at(folded, (slice(None), slice(None), iy), folded_w)
        return (folded,)

    return node(out, (a,), backward)


def _reflect_index(n, before, after):
    idx = np.arange(-before, n + after)
    # reflect without repeating the edge sample: ..., 2, 1, 0, 1, 2, ...
    idx = np.abs(idx)
    idx = np.where(idx >= n, 2 * (n - 1) - idx, idx)
    return idx


# -- reductions ---------------------------------------------------------


def _axes_count(shape, axis):
    if axis is None:
        return int(np.prod(shape)) if shape else 1
    axes = axis if isinstance(axis, tuple) else (axis,)
    n = 1
    for ax in axes:
        n *= shape[ax]
    return n


def reduce_sum(a, axis=None, keepdims=False):
    def backward(g):
        if axis is not None and not keepdims:
            axes = axis if isinstance(axis, tuple) else (axis,)
            for ax in sorted(axes):
                g = np.expand_dims(g, ax)
        return (np.broadcast_to(g, a.shape).copy(),)

    return node(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)


def reduce_mean(a, axis=None, keepdims=False):
    n = _axes_count(a.shape, axis)

    def backward(g):
        if axis is not None and not keepdims:
            axes = axis if isinstance(axis, tuple) else (axis,)
            for ax in sorted(axes):
                g = np.expand_dims(g, ax)
        return (np.broadcast_to(g, a.shape) / n,)

    return node(a.data.mean(axis=axis, keepdims=keepdims), (a,), backward)


def mean_abs_error(a, b):
    if a.shape != b.shape:
        raise ShapeError("mean_abs_error shapes differ: %r vs %r" % (a.shape, b.shape))
    return reduce_mean(absolute(sub(a, b)))


def mean_squared_error(a, b):
    if a.shape != b.shape:
        raise ShapeError("mean_squared_error shapes differ: %r vs %r" % (a.shape, b.shape))
    return reduce_mean(square(sub(a, b)))


# -- activations --------------------------------------------------------


def relu(a):
    mask = a.data > 0
    return node(a.data * mask, (a,), lambda g: (g * mask,))


def leaky_relu(a, slope=0.2):
    factor = np.where(a.data > 0, 1.0, slope).astype(a.dtype)
    return node(a.data * factor, (a,), lambda g: (g * factor,))


def tanh(a):
    t = np.tanh(a.data)
    return node(t, (a,), lambda g: (g * (1.0 - t * t),))


def sigmoid(a):
    s = 1.0 / (1.0 + np.exp(-a.data))
    return node(s, (a,), lambda g: (g * (s * (1.0 - s)),))


_ACTIVATIONS = {
    "relu": lambda x, slope: relu(x),
    "leaky_relu": lambda x, slope: leaky_relu(x, slope),
    "tanh": lambda x, slope: tanh(x),
    "sigmoid": lambda x, slope: sigmoid(x),
    "identity": lambda x, slope: x,
}


def activation(a, kind, slope=0.2):
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ContractError("unknown activation %r" % (kind,)) from None
    return fn(a, slope)
