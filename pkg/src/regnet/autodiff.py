"""Dense float64 tensors with reverse-mode automatic differentiation.

Every forward op returns a new :class:`Tensor` that remembers its parents and a
closure mapping the upstream gradient to one gradient per parent.  Calling
:func:`backward` on a scalar walks that graph once in reverse topological order
and accumulates ``grad`` on the leaf tensors that have ``requires_grad`` set.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from .exceptions import (
    ContractError,
    DegenerateBatchError,
    DimensionError,
    DomainError,
    NumericOverflowError,
)

__all__ = [
    "Tensor",
    "add",
    "backward",
    "conv2d",
    "div",
    "log",
    "make_op",
    "matmul",
    "maximum",
    "mean",
    "mul",
    "neg",
    "relu",
    "reshape",
    "rows",
    "softplus",
    "sqrt",
    "square",
    "sub",
    "sum",
    "topological_order",
    "var",
]


class Tensor:
    """A float64 array that can take part in an autodiff graph."""

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")
    # makes ``ndarray + Tensor`` dispatch to Tensor.__radd__
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.op = "leaf"
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)


def _lift(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def make_op(data, parents, backward_fn, op):
    """Wrap ``data`` as the output of an op.

    ``backward_fn(g)`` must return one gradient (or None) per parent, each with
    that parent's shape.  Raises NumericOverflowError on non-finite output.
    """
    data = np.asarray(data, dtype=np.float64)
    if not np.all(np.isfinite(data)):
        raise NumericOverflowError(f"{op}: forward produced non-finite values")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.op = op
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward_fn
    else:
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _broadcast_shape(a, b, op):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# elementwise


def add(a, b):
    a, b = _lift(a), _lift(b)
    _broadcast_shape(a, b, "add")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make_op(a.data + b.data, (a, b), bw, "add")


def sub(a, b):
    a, b = _lift(a), _lift(b)
    _broadcast_shape(a, b, "sub")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return make_op(a.data - b.data, (a, b), bw, "sub")


def mul(a, b):
    a, b = _lift(a), _lift(b)
    _broadcast_shape(a, b, "mul")

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return make_op(a.data * b.data, (a, b), bw, "mul")


def div(a, b):
    a, b = _lift(a), _lift(b)
    _broadcast_shape(a, b, "div")
    if np.any(b.data == 0):
        raise DomainError(f"div: zero divisor at index {_first_index(b.data == 0)}")

    def bw(g):
        return (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        )

    return make_op(a.data / b.data, (a, b), bw, "div")


def neg(a):
    a = _lift(a)
    return make_op(-a.data, (a,), lambda g: (-g,), "neg")


def relu(a):
    a = _lift(a)
    mask = a.data > 0  # subgradient at exactly 0 is 0

    return make_op(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


def _first_index(mask):
    idx = np.argwhere(mask)[0]
    return tuple(int(i) for i in idx)


def log(a):
    a = _lift(a)
    bad = ~(a.data > 0)
    if np.any(bad):
        raise DomainError(
            f"log: non-positive input {a.data[bad].flat[0]!r} at index {_first_index(bad)}"
        )
    return make_op(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def square(a):
    a = _lift(a)
    return make_op(a.data * a.data, (a,), lambda g: (2.0 * a.data * g,), "square")


def sqrt(a):
    a = _lift(a)
    bad = a.data < 0
    if np.any(bad):
        raise DomainError(f"sqrt: negative input at index {_first_index(bad)}")
    out = np.sqrt(a.data)
    return make_op(out, (a,), lambda g: (g / (2.0 * out),), "sqrt")


def softplus(a):
    """log(1 + exp(a)), evaluated without overflow."""
    a = _lift(a)
    return make_op(np.logaddexp(0.0, a.data), (a,), lambda g: (g * expit(a.data),), "softplus")


def maximum(a, floor):
    """Elementwise max against a scalar floor; gradient flows where a > floor."""
    a = _lift(a)
    mask = a.data > floor
    return make_op(np.where(mask, a.data, floor), (a,), lambda g: (g * mask,), "maximum")


# reductions and shape ops


def _check_axis(a, axis, op):
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    for ax in axes:
        if not -a.ndim <= ax < a.ndim:
            raise DimensionError(f"{op}: axis {ax} out of range for shape {a.shape}")
    return axes


def sum(a, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy
    a = _lift(a)
    if axis is not None:
        _check_axis(a, axis, "sum")
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return make_op(out, (a,), bw, "sum")


def mean(a, axis=None, keepdims=False):
    a = _lift(a)
    if axis is None:
        count = a.size
    else:
        count = int(np.prod([a.shape[ax] for ax in _check_axis(a, axis, "mean")]))
    out = a.data.mean(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, a.shape).copy(),)

    return make_op(out, (a,), bw, "mean")


def var(a, axis, keepdims=False):
    """Population variance (divisor = count) along one axis."""
    a = _lift(a)
    (ax,) = _check_axis(a, axis, "var")
    n = a.shape[ax]
    if n < 2:
        raise DegenerateBatchError(f"var: need at least 2 entries along axis {ax}, got {n}")
    centered = a.data - a.data.mean(axis=ax, keepdims=True)
    out = (centered * centered).mean(axis=ax, keepdims=keepdims)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, ax)
        return (g * centered * (2.0 / n),)

    return make_op(out, (a,), bw, "var")


def rows(a, start, stop):
    """Rows ``start:stop`` of ``a`` along the first axis."""
    a = _lift(a)
    if not 0 <= start <= stop <= a.shape[0]:
        raise DimensionError(f"rows: slice {start}:{stop} out of range for shape {a.shape}")

    def bw(g):
        out = np.zeros(a.shape)
        out[start:stop] = g
        return (out,)

    return make_op(a.data[start:stop], (a,), bw, "rows")


def reshape(a, shape):
    a = _lift(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot reshape {a.shape} into {shape}") from None
    return make_op(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


# linear algebra


def matmul(a, b):
    a, b = _lift(a), _lift(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def bw(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    return make_op(a.data @ b.data, (a, b), bw, "matmul")


def conv2d(x, kernel, stride=1, padding=None):
    """Cross-correlate ``x`` (b, c, h, w) with ``kernel`` (f, c, k, k).

    Zero padding defaults to ``k // 2``, so a 3x3 kernel at stride 1 keeps the
    spatial size.
    """
    x, kernel = _lift(x), _lift(kernel)
    if x.ndim != 4 or kernel.ndim != 4:
        raise DimensionError(f"conv2d: expected 4-d input and kernel, got {x.shape} and {kernel.shape}")
    b, c, h, w = x.shape
    f, kc, kh, kw = kernel.shape
    if c != kc:
        raise DimensionError(f"conv2d: input has {c} channels but kernel expects {kc} ({x.shape} vs {kernel.shape})")
    if stride not in (1, 2):
        raise ContractError(f"conv2d: stride must be 1 or 2, got {stride}")
    pad = kh // 2 if padding is None else padding
    if h + 2 * pad < kh or w + 2 * pad < kw:
        raise DimensionError(f"conv2d: input {x.shape} too small for kernel {kernel.shape}")

    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    oh, ow = win.shape[2], win.shape[3]
    out = np.tensordot(win, kernel.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)

    def bw(g):
        gk = np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3])) if kernel.requires_grad else None
        gx = None
        if x.requires_grad:
            cols = np.tensordot(g, kernel.data, axes=([1], [0]))  # (b, oh, ow, c, kh, kw)
            gxp = np.zeros(xp.shape)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += cols[
                        :, :, :, :, i, j
                    ].transpose(0, 3, 1, 2)
            gx = gxp[:, :, pad : pad + h, pad : pad + w] if pad else gxp
        return gx, gk

    return make_op(np.ascontiguousarray(out), (x, kernel), bw, "conv2d")


# graph traversal


def topological_order(root):
    """Nodes reachable from ``root``, every node after all of its parents."""
    order, seen = [], set()
    stack = [(root, False)]
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


def backward(loss):
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every grad-requiring leaf."""
    if not isinstance(loss, Tensor) or loss.size != 1:
        shape = loss.shape if isinstance(loss, Tensor) else type(loss).__name__
        raise ContractError(f"backward: loss must be a scalar tensor, got {shape}")
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topological_order(loss)):
        g = grads.pop(id(node), None)
        if g is None or not node.requires_grad:
            continue
        if not node._parents:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg
