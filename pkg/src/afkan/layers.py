"""Layer families and whole-model assembly.

The main layer expands each input through the windowed activation basis,
collapses the basis axis back down through one of three reduction modes,
normalizes, and applies an activation and a dense output map. Baselines
(squared-ReLU windows, a plain MLP, radial-basis layers) share the same
Model container so training and accounting treat them uniformly.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from . import tensor as T
from .activations import act_forward, resolve
from .basis import (FUNCTION_TYPES, GridSpec, PhasePair, activation_basis,
                    default_centers, grbf_basis, phase_init, relu_basis,
                    rswaf_basis)
from .normalization import (NORM_KINDS, NormParams, apply_norm, l2_minmax,
                            norm_init)
from .tensor import Tensor

VARIANTS = ("afkan", "relukan", "mlp", "grbf", "rswaf")
MODES = ("global_attn", "spatial_attn", "multistep")

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelSpec:
    """Everything needed to rebuild a model, minus the learned values."""
    variant: str
    widths: tuple
    grid: int = 3
    order: int = 3
    act: str = "silu"
    ftype: str = "quad1"
    mode: str = "global_attn"
    pln: str = "layer"
    l2mm: bool = True
    num_centers: int = 8
    seed: int = 0

    def grid_spec(self):
        return GridSpec(self.grid, self.order)


@dataclass
class AfkanLayer:
    """Basis expansion, learned channel mix, reduction, norm, dense out."""
    d_in: int
    d_out: int
    mode: str
    act: str
    ftype: str
    l2mm: bool
    phase: PhasePair
    mix_w: Tensor
    mix_b: Tensor
    tau: Tensor | None
    norm: NormParams
    w_out: Tensor
    b_out: Tensor


@dataclass
class ReluKanLayer:
    """Per-input squared-ReLU windows feeding a dense map, no norms."""
    d_in: int
    d_out: int
    phase: PhasePair
    weight: Tensor
    bias: Tensor


@dataclass
class MlpLayer:
    """Layer norm then a dense map without bias."""
    d_in: int
    d_out: int
    norm: NormParams
    weight: Tensor


@dataclass
class BasisKanLayer:
    """Layer norm, fixed radial centers, dense map over the expansion."""
    d_in: int
    d_out: int
    family: str
    centers: np.ndarray = field(repr=False)
    width: float
    norm: NormParams
    weight: Tensor
    bias: Tensor


def _kaiming_uniform(rng, shape, fan_in):
    bound = np.sqrt(6.0 / fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def afkan_forward(layer, x, training=False):
    b, d = x.shape
    xb = activation_basis(x, layer.phase, layer.act, layer.ftype)
    if layer.l2mm:
        xb = l2_minmax(xb)
    n = xb.shape[2]
    if layer.mode == "global_attn":
        scores = (T.matmul(xb, layer.mix_w) + layer.mix_b).reshape((b, d))
        attn = T.softmax(scores, axis=-1, temperature=layer.tau)
        reduced = (xb * attn.reshape((b, d, 1))).sum(axis=2)
    elif layer.mode == "spatial_attn":
        xt = xb.transpose((0, 2, 1))                       # (B, n, D)
        scores = xt * layer.mix_w.reshape((1, n, 1)) \
            + layer.mix_b.reshape((1, n, 1))
        attn = T.softmax(scores, axis=-2, temperature=layer.tau)
        attn = attn.transpose((0, 2, 1))                   # back to (B, D, n)
        reduced = (xb * attn).sum(axis=2)
    elif layer.mode == "multistep":
        reduced = (T.matmul(xb, layer.mix_w) + layer.mix_b).reshape((b, d))
    else:
        raise ValueError(f"unknown reduction mode '{layer.mode}'")
    h = apply_norm(reduced, layer.norm, training)
    h = act_forward(layer.act, h)
    return T.matmul(h, layer.w_out) + layer.b_out


def relukan_forward(layer, x):
    b = x.shape[0]
    r = relu_basis(x, layer.phase)
    flat = r.reshape((b, layer.d_in * r.shape[2]))
    return T.matmul(flat, layer.weight) + layer.bias


def mlp_forward(layer, x):
    return T.matmul(apply_norm(x, layer.norm), layer.weight)


def basis_kan_forward(layer, x):
    b = x.shape[0]
    h = apply_norm(x, layer.norm)
    if layer.family == "grbf":
        phi = grbf_basis(h, layer.centers, layer.width)
    else:
        phi = rswaf_basis(h, layer.centers, layer.width)
    flat = phi.reshape((b, layer.d_in * phi.shape[2]))
    return T.matmul(flat, layer.weight) + layer.bias


class Model:
    """An ordered stack of layers of one variant."""

    def __init__(self, spec, layers):
        self.spec = spec
        self.layers = layers

    def forward(self, x, training=False):
        if not isinstance(x, Tensor):
            x = Tensor(x)
        h = x
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            if self.spec.variant == "afkan":
                h = afkan_forward(layer, h, training)
            elif self.spec.variant == "relukan":
                h = relukan_forward(layer, h)
            elif self.spec.variant == "mlp":
                h = mlp_forward(layer, h)
                if i < last:
                    h = act_forward(self.spec.act, h)
            else:
                h = basis_kan_forward(layer, h)
        return h

    def __call__(self, x, training=False):
        return self.forward(x, training)

    _PARAM_FIELDS = {
        "afkan": ("phase.low", "phase.high", "mix_w", "mix_b", "tau",
                  "norm.gain", "norm.bias", "w_out", "b_out"),
        "relukan": ("phase.low", "phase.high", "weight", "bias"),
        "mlp": ("norm.gain", "norm.bias", "weight"),
        "grbf": ("norm.gain", "norm.bias", "weight", "bias"),
        "rswaf": ("norm.gain", "norm.bias", "weight", "bias"),
    }

    def _resolve_field(self, layer, dotted):
        obj = layer
        for part in dotted.split("."):
            obj = getattr(obj, part)
        return obj

    def parameters(self):
        """Stable-ordered (name, Tensor) pairs of every trainable tensor."""
        out = []
        for i, layer in enumerate(self.layers):
            for dotted in self._PARAM_FIELDS[self.spec.variant]:
                t = self._resolve_field(layer, dotted)
                if t is not None:
                    out.append((f"{i}.{dotted}", t))
        return out

    def buffers(self):
        """Non-trainable state that still belongs in a checkpoint."""
        out = []
        for i, layer in enumerate(self.layers):
            nm = getattr(layer, "norm", None)
            if nm is not None and nm.kind == "batch":
                out.append((f"{i}.norm.running_mean", nm.running_mean))
                out.append((f"{i}.norm.running_var", nm.running_var))
        return out

    def zero_grad(self):
        for _, p in self.parameters():
            p.zero_grad()

    def num_params(self):
        return sum(p.size for _, p in self.parameters())


def init_model(spec):
    """Validate a spec and build a freshly initialized model.

    Weight draws use one generator seeded by ``spec.seed``; the draw
    order is fixed by the layer and field order, so equal seeds give
    bit-identical models.
    """
    if spec.variant not in VARIANTS:
        raise ValueError(
            f"unknown variant '{spec.variant}', expected one of {VARIANTS}")
    if spec.mode not in MODES:
        raise ValueError(
            f"unknown mode '{spec.mode}', expected one of {MODES}")
    if spec.ftype not in FUNCTION_TYPES:
        raise ValueError(
            f"unknown function type '{spec.ftype}', expected one of "
            f"{FUNCTION_TYPES}")
    if spec.pln not in NORM_KINDS:
        raise ValueError(
            f"unknown pre-output norm '{spec.pln}', expected one of "
            f"{NORM_KINDS}")
    resolve(spec.act)
    widths = tuple(int(w) for w in spec.widths)
    if len(widths) < 2 or any(w < 1 for w in widths):
        raise ValueError(f"widths must be >= 2 positive sizes, got {widths}")
    gspec = spec.grid_spec()
    rng = np.random.default_rng(spec.seed)
    layers = []
    for d_in, d_out in zip(widths[:-1], widths[1:]):
        if spec.variant == "afkan":
            n = gspec.count
            if spec.mode == "spatial_attn":
                mix_w = _kaiming_uniform(rng, (n,), 1)
                mix_b = Tensor(np.zeros(n), requires_grad=True)
            else:
                mix_w = _kaiming_uniform(rng, (n, 1), n)
                mix_b = Tensor(np.zeros(1), requires_grad=True)
            tau = None
            if spec.mode != "multistep":
                tau = Tensor(np.array([np.sqrt(d_in)]), requires_grad=True)
            layers.append(AfkanLayer(
                d_in=d_in, d_out=d_out, mode=spec.mode, act=spec.act,
                ftype=spec.ftype, l2mm=spec.l2mm,
                phase=phase_init(gspec),
                mix_w=mix_w, mix_b=mix_b, tau=tau,
                norm=norm_init(spec.pln, d_in),
                w_out=_kaiming_uniform(rng, (d_in, d_out), d_in),
                b_out=Tensor(np.zeros(d_out), requires_grad=True)))
        elif spec.variant == "relukan":
            n = gspec.count
            layers.append(ReluKanLayer(
                d_in=d_in, d_out=d_out,
                phase=phase_init(gspec, d_in=d_in),
                weight=_kaiming_uniform(rng, (d_in * n, d_out), d_in * n),
                bias=Tensor(np.zeros(d_out), requires_grad=True)))
        elif spec.variant == "mlp":
            layers.append(MlpLayer(
                d_in=d_in, d_out=d_out,
                norm=norm_init("layer", d_in),
                weight=_kaiming_uniform(rng, (d_in, d_out), d_in)))
        else:
            centers, width = default_centers(spec.num_centers)
            c = spec.num_centers
            layers.append(BasisKanLayer(
                d_in=d_in, d_out=d_out, family=spec.variant,
                centers=centers, width=width,
                norm=norm_init("layer", d_in),
                weight=_kaiming_uniform(rng, (d_in * c, d_out), d_in * c),
                bias=Tensor(np.zeros(d_out), requires_grad=True)))
    return Model(spec, layers)


def save_model(model, path):
    """Write spec plus every parameter and buffer to one npz file.
    Arrays are stored as raw float64, so a round trip is bit-exact."""
    meta = {
        "version": CHECKPOINT_VERSION,
        "spec": asdict(model.spec),
    }
    arrays = {f"param:{name}": p.data for name, p in model.parameters()}
    arrays.update({f"buffer:{name}": b for name, b in model.buffers()})
    np.savez(path, meta=np.array(json.dumps(meta)), **arrays)


def load_model(path):
    with np.load(path, allow_pickle=False) as bundle:
        meta = json.loads(str(bundle["meta"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(
                f"checkpoint version {meta.get('version')} not supported "
                f"(expected {CHECKPOINT_VERSION})")
        spec_d = dict(meta["spec"])
        spec_d["widths"] = tuple(spec_d["widths"])
        model = init_model(ModelSpec(**spec_d))
        for name, p in model.parameters():
            p.data = bundle[f"param:{name}"].astype(np.float64)
        for i, layer in enumerate(model.layers):
            nm = getattr(layer, "norm", None)
            if nm is not None and nm.kind == "batch":
                nm.running_mean = bundle[f"buffer:{i}.norm.running_mean"]
                nm.running_var = bundle[f"buffer:{i}.norm.running_var"]
    return model
