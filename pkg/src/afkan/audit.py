"""Parameter and operation accounting.

Counts come straight from the live parameter tensors, so they cannot
drift from the implementation. The closed-form calculators cover the
classic dense-spline layer and the plain linear layer for comparison
tables. Operation estimates are analytic, derived from the shapes; dense
multiply-adds and elementwise work are reported separately.
"""
from __future__ import annotations

from dataclasses import dataclass

# elementwise ops per entry for each combination form
_COMBINE_OPS = {
    "sum": 1,
    "prod": 1,
    "sum_prod": 3,
    "quad1": 2,
    "quad2": 6,
    "cubic1": 5,
    "cubic2": 2,
}

# rough per-entry cost of one normalizer application
_NORM_OPS = {"layer": 8, "batch": 8, "none": 0}


@dataclass
class LayerCount:
    index: int
    shape: str
    params: dict

    @property
    def total(self):
        return sum(self.params.values())


@dataclass
class ParamReport:
    layers: list
    total: int

    def lines(self):
        """Delimited rows: layer,name,count with a trailing total."""
        out = ["layer,name,count"]
        for lc in self.layers:
            for name, cnt in lc.params.items():
                out.append(f"{lc.index},{name},{cnt}")
            out.append(f"{lc.index},subtotal,{lc.total}")
        out.append(f"all,total,{self.total}")
        return out


def count_params(model):
    """Exact per-layer parameter sizes taken from the model's tensors."""
    per_layer = {}
    for name, p in model.parameters():
        idx, field = name.split(".", 1)
        per_layer.setdefault(int(idx), {})[field] = p.size
    layers = []
    for i in sorted(per_layer):
        lay = model.layers[i]
        layers.append(LayerCount(
            index=i, shape=f"{lay.d_in}->{lay.d_out}", params=per_layer[i]))
    return ParamReport(layers=layers, total=sum(lc.total for lc in layers))


def kan_params_formula(d_in, d_out, grid, order):
    """Dense spline-style layer: one weight per basis function per edge,
    plus an output bias."""
    return d_in * d_out * (grid + order) + d_out


def mlp_params_formula(d_in, d_out):
    return d_in * d_out + d_out


@dataclass
class LayerFlops:
    index: int
    dense: int
    elementwise: int


@dataclass
class FlopReport:
    layers: list
    dense_total: int
    elementwise_total: int

    def lines(self):
        out = ["layer,dense,elementwise"]
        for lo in self.layers:
            out.append(f"{lo.index},{lo.dense},{lo.elementwise}")
        out.append(f"all,{self.dense_total},{self.elementwise_total}")
        return out


def estimate_flops(model, batch_size=1):
    """Analytic per-layer operation estimate for one forward pass.

    Dense counts are 2*m*n*k per matrix product (multiply and add).
    Elementwise counts treat one activation or arithmetic op on one
    entry as one unit; softmax costs five units per entry.
    """
    spec = model.spec
    b = batch_size
    rows = []
    for i, lay in enumerate(model.layers):
        d, o = lay.d_in, lay.d_out
        dense = 0
        elem = 0
        if spec.variant == "afkan":
            n = spec.grid + spec.order
            # basis: two shifts, two activations, then the combine form
            elem += (4 + _COMBINE_OPS[spec.ftype]) * b * d * n
            if lay.l2mm:
                elem += 8 * b * d * n
            if lay.mode == "multistep":
                dense += 2 * b * d * n
            elif lay.mode == "global_attn":
                dense += 2 * b * d * n          # scores
                elem += 5 * b * d               # softmax over features
                elem += 2 * b * d * n           # weight and collapse
            else:
                elem += 2 * b * d * n           # per-channel scores
                elem += 5 * b * d * n           # softmax over channels
                elem += 2 * b * d * n
            elem += _NORM_OPS[lay.norm.kind] * b * d
            elem += b * d                       # pre-output activation
            dense += 2 * b * d * o
        elif spec.variant == "relukan":
            n = spec.grid + spec.order
            elem += 8 * b * d * n
            dense += 2 * b * (d * n) * o
        elif spec.variant == "mlp":
            elem += _NORM_OPS["layer"] * b * d
            dense += 2 * b * d * o
            if i < len(model.layers) - 1:
                elem += b * o
        else:
            c = spec.num_centers
            elem += _NORM_OPS["layer"] * b * d
            elem += 4 * b * d * c
            dense += 2 * b * (d * c) * o
        rows.append(LayerFlops(index=i, dense=dense, elementwise=elem))
    return FlopReport(
        layers=rows,
        dense_total=sum(r.dense for r in rows),
        elementwise_total=sum(r.elementwise for r in rows))
