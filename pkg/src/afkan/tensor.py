"""Reverse-mode automatic differentiation over numpy float64 arrays.

The tape is built implicitly: every operation returns a new Tensor that
remembers its parents and a vector-Jacobian closure. ``backward`` on a
scalar walks the graph once in reverse topological order, accumulating
into a per-call gradient map, and only at the end adds each tensor's
total into ``.grad``. Calling ``backward`` twice therefore adds the same
gradient twice, exactly.
"""
from __future__ import annotations

import contextlib

import numpy as np


class ShapeError(ValueError):
    """Operand shapes cannot be combined for the requested operation."""


class NumericsError(ArithmeticError):
    """A computation produced, or would produce, invalid numbers."""


_grad_enabled = True
_strict_divide = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block. Used for evaluation passes."""
    global _grad_enabled
    saved = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = saved


def set_strict_divide(flag):
    """Toggle the division-by-exact-zero check. Returns the previous setting."""
    global _strict_divide
    saved = _strict_divide
    _strict_divide = bool(flag)
    return saved


def _check_divisor(d):
    if _strict_divide and np.any(d == 0):
        raise NumericsError("division by exact zero (strict mode is on)")


class Tensor:
    """A float64 array plus an optional place on the tape."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp", "_op")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._vjp = None
        self._op = "leaf"

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

    def detach(self):
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        flags = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, op={self._op}{flags})"

    def backward(self):
        """Propagate from a scalar. Adds into ``.grad`` of every tensor
        on the tape that has ``requires_grad`` set; tensors not reachable
        from this output are left untouched."""
        if self.data.size != 1:
            raise ShapeError(
                f"backward needs a scalar, got shape {self.data.shape}")
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        gmap = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = gmap.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                node.grad = g.copy() if node.grad is None else node.grad + g
            if node._vjp is None:
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None:
                    continue
                held = gmap.get(id(parent))
                gmap[id(parent)] = pg if held is None else held + pg

    # operator sugar; implementations below at module level
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return pow_scalar(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, shape):
        return reshape(self, shape)

    def transpose(self, axes):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis, keepdims)

    def max(self, axis=None, keepdims=False):
        return reduce_max(self, axis, keepdims)

    def min(self, axis=None, keepdims=False):
        return reduce_min(self, axis, keepdims)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def sqrt(self):
        return sqrt(self)


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def make_node(data, parents, vjp, op):
    """Create a Tensor recorded on the tape, unless recording is off or no
    parent needs gradients. ``vjp(g)`` must return one gradient (or None)
    per parent, in order."""
    parents = tuple(parents)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out = Tensor(data, requires_grad=True)
        out._parents = parents
        out._vjp = vjp
        out._op = op
        return out
    return Tensor(data)


def unbroadcast(g, shape):
    """Sum ``g`` down to ``shape``, undoing numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, dim in enumerate(shape):
        if dim == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _broadcast_data(a, b, opname):
    try:
        return np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError:
        raise ShapeError(
            f"{opname}: cannot broadcast {a.data.shape} with {b.data.shape}")


def add(a, b):
    a, b = _wrap(a), _wrap(b)
    _broadcast_data(a, b, "add")

    def vjp(g):
        ga = unbroadcast(g, a.data.shape) if a.requires_grad else None
        gb = unbroadcast(g, b.data.shape) if b.requires_grad else None
        return ga, gb

    return make_node(a.data + b.data, (a, b), vjp, "add")


def sub(a, b):
    a, b = _wrap(a), _wrap(b)
    _broadcast_data(a, b, "sub")

    def vjp(g):
        ga = unbroadcast(g, a.data.shape) if a.requires_grad else None
        gb = unbroadcast(-g, b.data.shape) if b.requires_grad else None
        return ga, gb

    return make_node(a.data - b.data, (a, b), vjp, "sub")


def mul(a, b):
    a, b = _wrap(a), _wrap(b)
    _broadcast_data(a, b, "mul")

    def vjp(g):
        ga = unbroadcast(g * b.data, a.data.shape) if a.requires_grad else None
        gb = unbroadcast(g * a.data, b.data.shape) if b.requires_grad else None
        return ga, gb

    return make_node(a.data * b.data, (a, b), vjp, "mul")


def div(a, b):
    a, b = _wrap(a), _wrap(b)
    _broadcast_data(a, b, "div")
    _check_divisor(b.data)

    def vjp(g):
        ga = unbroadcast(g / b.data, a.data.shape) if a.requires_grad else None
        gb = None
        if b.requires_grad:
            gb = unbroadcast(-g * a.data / (b.data * b.data), b.data.shape)
        return ga, gb

    return make_node(a.data / b.data, (a, b), vjp, "div")


def neg(a):
    a = _wrap(a)
    return make_node(-a.data, (a,), lambda g: (-g,), "neg")


def pow_scalar(a, p):
    """Elementwise a**p for a plain-number exponent."""
    a = _wrap(a)
    p = float(p)

    def vjp(g):
        return (g * p * a.data ** (p - 1.0),)

    return make_node(a.data ** p, (a,), vjp, "pow")


def exp(a):
    a = _wrap(a)
    out_data = np.exp(a.data)

    def vjp(g):
        return (g * out_data,)

    return make_node(out_data, (a,), vjp, "exp")


def log(a):
    a = _wrap(a)

    def vjp(g):
        return (g / a.data,)

    return make_node(np.log(a.data), (a,), vjp, "log")


def sqrt(a):
    a = _wrap(a)
    out_data = np.sqrt(a.data)

    def vjp(g):
        return (g * 0.5 / out_data,)

    return make_node(out_data, (a,), vjp, "sqrt")


def tanh(a):
    a = _wrap(a)
    out_data = np.tanh(a.data)

    def vjp(g):
        return (g * (1.0 - out_data * out_data),)

    return make_node(out_data, (a,), vjp, "tanh")


def maximum_scalar(a, floor):
    """Elementwise max(a, floor). At a tie the gradient follows the
    right-hand derivative, so entries equal to the floor still pass it."""
    a = _wrap(a)
    floor = float(floor)

    def vjp(g):
        return (g * (a.data >= floor),)

    return make_node(np.maximum(a.data, floor), (a,), vjp, "max_s")


def matmul(a, b):
    """(m,k)@(k,n) or batched (B,m,k)@(k,n)."""
    a, b = _wrap(a), _wrap(b)
    if a.ndim not in (2, 3) or b.ndim != 2:
        raise ShapeError(
            f"matmul supports (m,k)@(k,n) or (B,m,k)@(k,n), "
            f"got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[-1] != b.data.shape[0]:
        raise ShapeError(
            f"matmul inner dims differ: {a.data.shape} @ {b.data.shape}")

    def vjp(g):
        ga = gb = None
        if a.requires_grad:
            ga = g @ b.data.T
        if b.requires_grad:
            if a.ndim == 2:
                gb = a.data.T @ g
            else:
                gb = np.tensordot(a.data, g, axes=([0, 1], [0, 1]))
        return ga, gb

    return make_node(a.data @ b.data, (a, b), vjp, "matmul")


def reshape(a, shape):
    a = _wrap(a)
    old = a.data.shape

    def vjp(g):
        return (g.reshape(old),)

    return make_node(a.data.reshape(shape), (a,), vjp, "reshape")


def transpose(a, axes):
    a = _wrap(a)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def vjp(g):
        return (g.transpose(inverse),)

    return make_node(a.data.transpose(axes), (a,), vjp, "transpose")


def _normalize_axis(axis, ndim):
    if axis is None:
        return None
    axis = int(axis)
    if not -ndim <= axis < ndim:
        raise ShapeError(f"axis {axis} out of range for ndim {ndim}")
    return axis % ndim


def _expand_reduced(g, src_shape, axis, keepdims):
    if keepdims:
        return g
    if axis is None:
        return np.broadcast_to(g, src_shape)
    return np.expand_dims(g, axis)


def reduce_sum(a, axis=None, keepdims=False):
    a = _wrap(a)
    axis = _normalize_axis(axis, a.ndim)
    src_shape = a.data.shape

    def vjp(g):
        g = _expand_reduced(g, src_shape, axis, keepdims)
        return (np.broadcast_to(g, src_shape),)

    return make_node(a.data.sum(axis=axis, keepdims=keepdims), (a,), vjp, "sum")


def reduce_mean(a, axis=None, keepdims=False):
    a = _wrap(a)
    axis = _normalize_axis(axis, a.ndim)
    src_shape = a.data.shape
    count = a.data.size if axis is None else src_shape[axis]

    def vjp(g):
        g = _expand_reduced(g, src_shape, axis, keepdims)
        return (np.broadcast_to(g, src_shape) / count,)

    return make_node(a.data.mean(axis=axis, keepdims=keepdims), (a,), vjp,
                     "mean")


def _reduce_extreme(a, axis, keepdims, pick, op):
    """Shared max/min reduce. Gradient goes to the first extreme along the
    axis (ties route to the lowest index)."""
    a = _wrap(a)
    axis_n = _normalize_axis(axis, a.ndim)
    src_shape = a.data.shape
    if axis_n is None:
        flat_idx = pick(a.data)
        out_data = a.data.reshape(-1)[flat_idx]
        if keepdims:
            out_data = np.full((1,) * a.ndim, out_data)

        def vjp(g):
            mask = np.zeros(src_shape)
            mask.reshape(-1)[flat_idx] = 1.0
            return (mask * np.sum(g),)
    else:
        idx = pick(a.data, axis=axis_n)
        idx_keep = np.expand_dims(idx, axis_n)
        out_data = np.take_along_axis(a.data, idx_keep, axis=axis_n)
        if not keepdims:
            out_data = out_data.squeeze(axis=axis_n)

        def vjp(g):
            g = _expand_reduced(g, src_shape, axis_n, keepdims)
            mask = np.zeros(src_shape)
            np.put_along_axis(mask, idx_keep, 1.0, axis=axis_n)
            return (mask * g,)

    return make_node(out_data, (a,), vjp, op)


def reduce_max(a, axis=None, keepdims=False):
    return _reduce_extreme(a, axis, keepdims, np.argmax, "max")


def reduce_min(a, axis=None, keepdims=False):
    return _reduce_extreme(a, axis, keepdims, np.argmin, "min")


def softmax(a, axis=-1, temperature=None):
    """Softmax along one axis, with an optional temperature.

    The temperature is clamped from below at 1.0 before dividing, so a
    value under 1 behaves exactly like 1. It may be a learnable Tensor;
    the clamp passes gradient whenever the temperature is >= 1.
    """
    a = _wrap(a)
    if temperature is not None:
        if isinstance(temperature, Tensor):
            a = div(a, maximum_scalar(temperature, 1.0))
        else:
            a = div(a, max(float(temperature), 1.0))
    shifted = sub(a, reduce_max(a, axis=axis, keepdims=True))
    e = exp(shifted)
    return div(e, reduce_sum(e, axis=axis, keepdims=True))


def grad_check(f, theta, eps=1e-5):
    """Compare the tape gradient of ``f()`` w.r.t. ``theta`` against central
    finite differences. Returns the worst relative error, where each entry
    is scored as |ad - fd| / max(1, |ad|, |fd|)."""
    theta.grad = None
    loss = f()
    if loss.data.size != 1:
        raise ShapeError("grad_check needs a scalar-valued f")
    if not np.isfinite(loss.data):
        raise NumericsError("grad_check: f is non-finite at theta")
    loss.backward()
    g_ad = (theta.grad if theta.grad is not None
            else np.zeros_like(theta.data)).ravel()
    flat = theta.data.ravel()
    if not np.shares_memory(flat, theta.data):
        raise ShapeError("grad_check needs a contiguous parameter tensor")
    worst = 0.0
    with no_grad():
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + eps
            hi = float(f().data)
            flat[i] = saved - eps
            lo = float(f().data)
            flat[i] = saved
            if not (np.isfinite(hi) and np.isfinite(lo)):
                raise NumericsError(
                    f"grad_check: f is non-finite near coordinate {i}")
            g_fd = (hi - lo) / (2.0 * eps)
            err = abs(g_ad[i] - g_fd) / max(1.0, abs(g_ad[i]), abs(g_fd))
            if err > worst:
                worst = err
    return worst
