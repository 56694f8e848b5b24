"""Input normalizers: layer norm, batch norm, and whole-tensor L2 min-max.

All three are built from tape primitives so gradients flow through the
statistics. Batch norm keeps running buffers as plain arrays; they are
never parameters and never receive gradients.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import ShapeError, Tensor

NORM_KINDS = ("layer", "batch", "none")


@dataclass
class NormParams:
    kind: str
    gain: Tensor | None = None
    bias: Tensor | None = None
    running_mean: np.ndarray | None = field(default=None, repr=False)
    running_var: np.ndarray | None = field(default=None, repr=False)
    eps: float = 1e-5
    momentum: float = 0.1


def norm_init(kind, width):
    """Fresh affine parameters (ones/zeros) for a feature width."""
    if kind not in NORM_KINDS:
        raise ValueError(
            f"unknown norm kind '{kind}', expected one of {NORM_KINDS}")
    if kind == "none":
        return NormParams("none")
    nm = NormParams(kind,
                    gain=Tensor(np.ones(width), requires_grad=True),
                    bias=Tensor(np.zeros(width), requires_grad=True))
    if kind == "batch":
        nm.running_mean = np.zeros(width)
        nm.running_var = np.ones(width)
    return nm


def layer_norm(x, nm):
    """Normalize each row over its features, then apply the affine pair."""
    m = x.mean(axis=1, keepdims=True)
    centered = x - m
    var = (centered * centered).mean(axis=1, keepdims=True)
    y = centered / (var + nm.eps).sqrt()
    return y * nm.gain + nm.bias


def batch_norm(x, nm, training):
    """Normalize each feature over the batch. Training mode uses batch
    statistics (biased variance) and updates the running buffers; eval
    mode uses the buffers as constants."""
    if training:
        if x.shape[0] < 2:
            raise ShapeError(
                f"batch norm needs >= 2 rows in training, got {x.shape[0]}")
        m = x.mean(axis=0, keepdims=True)
        centered = x - m
        var = (centered * centered).mean(axis=0, keepdims=True)
        mom = nm.momentum
        nm.running_mean = (1 - mom) * nm.running_mean + mom * m.data[0]
        nm.running_var = (1 - mom) * nm.running_var + mom * var.data[0]
        y = centered / (var + nm.eps).sqrt()
    else:
        y = (x - Tensor(nm.running_mean)) / Tensor(
            np.sqrt(nm.running_var + nm.eps))
    return y * nm.gain + nm.bias


def apply_norm(x, nm, training=False):
    if nm.kind == "layer":
        return layer_norm(x, nm)
    if nm.kind == "batch":
        return batch_norm(x, nm, training)
    return x


def l2_minmax(x, target=(0.0, 1.0)):
    """Scale the whole tensor by its L2 norm, then min-max map into the
    target interval (default [0, 1]).

    Both reductions run over every entry, not per row. The min and max
    route gradient to their (first) attaining entry. Degenerate inputs
    collapse to a constant: an all-zero tensor skips the L2 step (norm
    zero), and a tensor that is constant after scaling maps to the
    target low.
    """
    t_lo, t_hi = target
    y = x
    if np.any(x.data):
        y = x / (x * x).sum().sqrt()
    lo = y.min()
    hi = y.max()
    if hi.data == lo.data:
        return Tensor(np.full(x.data.shape, float(t_lo)))
    unit = (y - lo) / (hi - lo)
    if (t_lo, t_hi) == (0.0, 1.0):
        return unit
    return unit * (t_hi - t_lo) + t_lo
