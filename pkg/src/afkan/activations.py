"""Nine scalar activations with closed-form derivatives.

Each activation is one tape node: the forward stores the input and the
backward multiplies by the closed-form derivative, so tape gradients and
``act_derivative`` agree to machine precision by construction. Piecewise
functions (relu, leaky_relu, elu, selu) take the right-hand derivative
at their breakpoints.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, make_node

ELU_ALPHA = 1.0
LEAKY_SLOPE = 0.01
SELU_ALPHA = 1.6732632423543772
SELU_SCALE = 1.0507009873554805
GELU_COEF = math.sqrt(2.0 / math.pi)
GELU_CUBIC = 0.044715


@dataclass(frozen=True)
class ActivationKind:
    """An activation tag plus the shape parameters some of them carry."""
    tag: str
    alpha: float | None = None   # elu / leaky_relu / selu
    scale: float | None = None   # selu only


def _sigmoid(x):
    # two-branch form: never exponentiates a large positive argument
    flat = np.atleast_1d(np.asarray(x, dtype=np.float64))
    out = np.empty_like(flat)
    pos = flat >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-flat[pos]))
    ex = np.exp(flat[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out.reshape(np.shape(x))


def _relu(x, _a, _s):
    return np.maximum(x, 0.0)


def _relu_d(x, _a, _s):
    return (x >= 0).astype(np.float64)


def _leaky(x, a, _s):
    return np.where(x >= 0, x, a * x)


def _leaky_d(x, a, _s):
    return np.where(x >= 0, 1.0, a)


def _elu(x, a, _s):
    return np.where(x >= 0, x, a * np.expm1(np.minimum(x, 0.0)))


def _elu_d(x, a, _s):
    return np.where(x >= 0, 1.0, a * np.exp(np.minimum(x, 0.0)))


def _selu(x, a, s):
    return s * np.where(x >= 0, x, a * np.expm1(np.minimum(x, 0.0)))


def _selu_d(x, a, s):
    return s * np.where(x >= 0, 1.0, a * np.exp(np.minimum(x, 0.0)))


def _sigmoid_f(x, _a, _s):
    return _sigmoid(x)


def _sigmoid_d(x, _a, _s):
    sg = _sigmoid(x)
    return sg * (1.0 - sg)


def _tanh(x, _a, _s):
    return np.tanh(x)


def _tanh_d(x, _a, _s):
    t = np.tanh(x)
    return 1.0 - t * t


def _silu(x, _a, _s):
    return x * _sigmoid(x)


def _silu_d(x, _a, _s):
    sg = _sigmoid(x)
    return sg * (1.0 + x * (1.0 - sg))


def _softplus(x, _a, _s):
    return np.logaddexp(0.0, x)


def _softplus_d(x, _a, _s):
    return _sigmoid(x)


def _gelu(x, _a, _s):
    inner = GELU_COEF * (x + GELU_CUBIC * x ** 3)
    return 0.5 * x * (1.0 + np.tanh(inner))


def _gelu_d(x, _a, _s):
    inner = GELU_COEF * (x + GELU_CUBIC * x ** 3)
    t = np.tanh(inner)
    sech2 = 1.0 - t * t
    return 0.5 * (1.0 + t) + 0.5 * x * sech2 * GELU_COEF * (
        1.0 + 3.0 * GELU_CUBIC * x ** 2)


_TABLE = {
    "elu": (_elu, _elu_d, ELU_ALPHA, None),
    "gelu": (_gelu, _gelu_d, None, None),
    "leaky_relu": (_leaky, _leaky_d, LEAKY_SLOPE, None),
    "relu": (_relu, _relu_d, None, None),
    "selu": (_selu, _selu_d, SELU_ALPHA, SELU_SCALE),
    "sigmoid": (_sigmoid_f, _sigmoid_d, None, None),
    "silu": (_silu, _silu_d, None, None),
    "softplus": (_softplus, _softplus_d, None, None),
    "tanh": (_tanh, _tanh_d, None, None),
}

ACTIVATION_TAGS = tuple(sorted(_TABLE))


def resolve(kind):
    """Accept a tag string or an ActivationKind; fill in default shape
    parameters and reject unknown tags."""
    if isinstance(kind, ActivationKind):
        tag, alpha, scale = kind.tag, kind.alpha, kind.scale
    else:
        tag, alpha, scale = kind, None, None
    if tag not in _TABLE:
        raise ValueError(
            f"unknown activation '{tag}', expected one of "
            f"{', '.join(ACTIVATION_TAGS)}")
    _, _, a_def, s_def = _TABLE[tag]
    alpha = a_def if alpha is None else alpha
    scale = s_def if scale is None else scale
    if alpha is not None and alpha <= 0:
        raise ValueError(f"activation '{tag}' needs alpha > 0, got {alpha}")
    return ActivationKind(tag, alpha, scale)


def act_value(kind, x):
    """Plain-array forward evaluation."""
    k = resolve(kind)
    fn = _TABLE[k.tag][0]
    return fn(np.asarray(x, dtype=np.float64), k.alpha, k.scale)


def act_derivative(kind, x):
    """Plain-array closed-form derivative."""
    k = resolve(kind)
    fn = _TABLE[k.tag][1]
    return fn(np.asarray(x, dtype=np.float64), k.alpha, k.scale)


def act_forward(kind, x):
    """Apply the activation to a Tensor as a single tape node."""
    k = resolve(kind)
    fwd, deriv, _, _ = _TABLE[k.tag]
    if not isinstance(x, Tensor):
        x = Tensor(x)

    def vjp(g):
        return (g * deriv(x.data, k.alpha, k.scale),)

    return make_node(fwd(x.data, k.alpha, k.scale), (x,), vjp, k.tag)
