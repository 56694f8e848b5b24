"""Basis constructions shared by the layer family.

A grid of ``grid`` cells refined by ``order`` gives ``grid + order``
overlapping basis functions per input. Phase pairs hold the trainable
left/right edges of those windows; the activation basis composes an
activation over both edges and combines the halves with one of seven
small algebraic forms.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .activations import act_forward
from .tensor import NumericsError, ShapeError, Tensor

FUNCTION_TYPES = (
    "sum", "prod", "sum_prod", "quad1", "quad2", "cubic1", "cubic2")


@dataclass(frozen=True)
class GridSpec:
    """Grid resolution and overlap order for windowed bases."""
    grid: int
    order: int

    def __post_init__(self):
        if self.grid < 1:
            raise ValueError(f"grid must be >= 1, got {self.grid}")
        if self.order < 1:
            raise ValueError(f"order must be >= 1, got {self.order}")

    @property
    def count(self):
        """Number of basis functions per input."""
        return self.grid + self.order


@dataclass
class PhasePair:
    """Trainable window edges. ``low`` and ``high`` share a shape:
    (count,) when compact, (d_in, count) when per-input."""
    low: Tensor
    high: Tensor


def _ulp_shift(x, steps):
    toward = np.inf if steps > 0 else -np.inf
    for _ in range(abs(steps)):
        x = np.nextafter(x, toward)
    return x


def _snap_pair(lo0, span):
    """Nudge (lo0, lo0 + span) by a few ulps at most, so that the float
    subtraction high - low recovers span exactly. The nearest adjustment
    wins; low moves only when no high alone works."""
    for dl in sorted(range(-8, 9), key=abs):
        lo = _ulp_shift(lo0, dl)
        hi0 = lo + span
        for dh in sorted(range(-8, 9), key=abs):
            hi = _ulp_shift(hi0, dh)
            if hi - lo == span:
                return lo, hi
    return lo0, lo0 + span


def phase_init(spec, d_in=None):
    """Initial window edges: low_i = (i - order)/grid, high = low +
    (order + 1)/grid, paired per entry so the float subtraction
    high - low recovers (order + 1)/grid exactly wherever float spacing
    admits a nearby pair (every grid, order <= 5 does). With ``d_in``
    the vectors are copied per input."""
    span = (spec.order + 1) / spec.grid
    low = np.empty(spec.count)
    high = np.empty(spec.count)
    for j in range(spec.count):
        low[j], high[j] = _snap_pair((j - spec.order) / spec.grid, span)
    if d_in is not None:
        low = np.tile(low, (d_in, 1))
        high = np.tile(high, (d_in, 1))
    return PhasePair(Tensor(low, requires_grad=True),
                     Tensor(high, requires_grad=True))


def combine(ftype, p, q):
    """Merge the two activation halves into one basis response."""
    if ftype == "sum":
        return p + q
    if ftype == "prod":
        return p * q
    if ftype == "sum_prod":
        return p + q + p * q
    if ftype == "quad1":
        return (p * q) ** 2
    if ftype == "quad2":
        return p ** 2 + q ** 2 + (p * q) ** 2
    if ftype == "cubic1":
        return (p + q) * (p ** 2 + q ** 2)
    if ftype == "cubic2":
        return (p * q) ** 3
    raise ValueError(
        f"unknown function type '{ftype}', expected one of "
        f"{', '.join(FUNCTION_TYPES)}")


def _expand(x):
    if x.ndim != 2:
        raise ShapeError(f"basis input must be (batch, d_in), got {x.shape}")
    b, d = x.shape
    return T.reshape(x, (b, d, 1))


def activation_basis(x, phase, act, ftype):
    """Windowed activation basis: act(x - low) combined with act(high - x).

    x: (B, D) Tensor. Returns (B, D, count)."""
    xe = _expand(x)
    p = act_forward(act, xe - phase.low)
    q = act_forward(act, phase.high - xe)
    return combine(ftype, p, q)


def relu_basis(x, phase):
    """Squared-ReLU window basis, rescaled so each window peaks at 1.

    The scale 16/(high - low)^4 is recomputed from the live phases, so
    gradients reach the edges through it as well."""
    span = phase.high - phase.low
    if np.any(span.data == 0):
        raise NumericsError("relu basis: zero-width window (high == low)")
    scale = 16.0 / span ** 4
    xe = _expand(x)
    p = T.maximum_scalar(xe - phase.low, 0.0)
    q = T.maximum_scalar(phase.high - xe, 0.0)
    return (p * q) ** 2 * scale


def window_constants(spec):
    """Peak product value m and its reciprocal rescale c for the squared
    ReLU windows at initialization.

    m = (span/2)^2 squared with span = (order+1)/grid, and c = 16/span^4,
    so m*c == 1. c is evaluated through the reciprocal ratio
    grid/(order+1); when that ratio is exactly representable (for example
    5/4), c is exact and m inherits correct rounding from the division.
    """
    ratio = spec.grid / (spec.order + 1)
    r2 = ratio * ratio
    c = 16.0 * (r2 * r2)
    return 1.0 / c, c


def default_centers(num=8, lo=-2.0, hi=2.0):
    """Evenly spaced radial centers and their spacing (used as width)."""
    if num < 2:
        raise ValueError(f"need at least 2 centers, got {num}")
    centers = np.linspace(lo, hi, num)
    return centers, float(centers[1] - centers[0])


def grbf_basis(x, centers, width):
    """Gaussian bumps exp(-(x - c)^2 / (2 width^2)). Returns (B, D, C)."""
    xe = _expand(x)
    r = xe - Tensor(np.asarray(centers, dtype=np.float64))
    return T.exp(r * r * (-1.0 / (2.0 * width * width)))


def rswaf_basis(x, centers, width):
    """Reflective switch bumps 1 - tanh((x - c)/width)^2. Returns (B, D, C)."""
    xe = _expand(x)
    r = (xe - Tensor(np.asarray(centers, dtype=np.float64))) * (1.0 / width)
    t = act_forward("tanh", r)
    return 1.0 - t * t


def bspline_basis(x, spec, lo=-1.0, hi=1.0):
    """Uniform B-spline basis values by the Cox-de Boor recurrence.

    Knots are spaced (hi - lo)/grid apart and extended ``order`` knots
    past each end, giving grid + order basis functions of degree
    ``order``. Plain-array evaluation; rows over [lo, hi] sum to 1.
    """
    x = np.asarray(x, dtype=np.float64)
    step = (hi - lo) / spec.grid
    n_knots = spec.grid + 2 * spec.order + 1
    knots = lo + (np.arange(n_knots) - spec.order) * step
    xe = x[..., None]
    # degree 0: half-open cells, except the cell ending at hi is closed
    left = knots[:-1]
    right = knots[1:]
    bases = ((xe >= left) & (xe < right)).astype(np.float64)
    closing = spec.grid + spec.order - 1
    at_hi = x == right[closing]
    bases[..., closing] = np.where(at_hi, 1.0, bases[..., closing])
    bases[..., closing + 1] = np.where(at_hi, 0.0, bases[..., closing + 1])
    for deg in range(1, spec.order + 1):
        # uniform knots: every denominator equals deg*step, never zero
        left_num = xe - knots[: -(deg + 1)]
        right_num = knots[deg + 1:] - xe
        width = deg * step
        bases = (left_num * bases[..., :-1] +
                 right_num * bases[..., 1:]) / width
    return bases


def sample_curves(kind, spec, act="silu", ftype="quad1", x_lo=-0.6, x_hi=1.6,
                  num=201, num_centers=8, center_lo=-2.0, center_hi=2.0):
    """Sample every basis function of a family on a 1-d grid.

    Returns (x values (num,), curve matrix (num, n_basis)). Used by the
    plotting path; no gradients involved.
    """
    xs = np.linspace(x_lo, x_hi, num)
    col = Tensor(xs.reshape(-1, 1))
    if kind == "afkan":
        phase = phase_init(spec)
        vals = activation_basis(col, phase, act, ftype).data[:, 0, :]
    elif kind == "relu_kan":
        phase = phase_init(spec)
        vals = relu_basis(col, phase).data[:, 0, :]
    elif kind == "grbf":
        centers, width = default_centers(num_centers, center_lo, center_hi)
        vals = grbf_basis(col, centers, width).data[:, 0, :]
    elif kind == "rswaf":
        centers, width = default_centers(num_centers, center_lo, center_hi)
        vals = rswaf_basis(col, centers, width).data[:, 0, :]
    elif kind == "bspline":
        vals = bspline_basis(xs, spec, lo=x_lo, hi=x_hi)
    else:
        raise ValueError(f"unknown basis kind '{kind}'")
    return xs, vals
