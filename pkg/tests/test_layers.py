"""Model variants: construction, forward pipelines, checkpoints."""
import numpy as np
import pytest

import oracles
from afkan import tensor as T
from afkan.basis import activation_basis
from afkan.layers import (MODES, VARIANTS, BasisKanLayer, ModelSpec,
                          basis_kan_forward, init_model, load_model,
                          relukan_forward, save_model)
from afkan.normalization import NormParams, l2_minmax
from afkan.tensor import Tensor, grad_check


def small_spec(**kw):
    base = dict(variant="afkan", widths=(12, 8, 10), grid=3, order=3, seed=0)
    base.update(kw)
    return ModelSpec(**base)


def test_variant_and_mode_tables():
    assert set(VARIANTS) == {"afkan", "relukan", "mlp", "grbf", "rswaf"}
    assert set(MODES) == {"global_attn", "spatial_attn", "multistep"}


def test_forward_shapes_all_variants():
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 1, (64, 12))
    for variant in VARIANTS:
        model = init_model(small_spec(variant=variant))
        out = model(x)
        assert out.shape == (64, 10), variant


def test_afkan_hidden_width_shape():
    model = init_model(small_spec(widths=(784, 64, 10)))
    x = np.random.default_rng(1).uniform(0, 1, (4, 784))
    assert model(x).shape == (4, 10)
    assert model.layers[0].w_out.shape == (784, 64)


def test_init_model_rejects_bad_knobs():
    with pytest.raises(ValueError, match="variant"):
        init_model(small_spec(variant="transformer"))
    with pytest.raises(ValueError, match="mode"):
        init_model(small_spec(mode="local_attn"))
    with pytest.raises(ValueError, match="function type"):
        init_model(small_spec(ftype="quartic"))
    with pytest.raises(ValueError, match="norm"):
        init_model(small_spec(pln="group"))
    with pytest.raises(ValueError, match="activation"):
        init_model(small_spec(act="swishish"))
    with pytest.raises(ValueError, match="widths"):
        init_model(small_spec(widths=(12,)))
    with pytest.raises(ValueError, match="widths"):
        init_model(small_spec(widths=(12, 0, 10)))


def test_equal_seeds_give_identical_models():
    a = init_model(small_spec(seed=7))
    b = init_model(small_spec(seed=7))
    c = init_model(small_spec(seed=8))
    for (na, pa), (nb, pb) in zip(a.parameters(), b.parameters()):
        assert na == nb
        assert np.array_equal(pa.data, pb.data)
    diff = [not np.array_equal(pa.data, pc.data)
            for (_, pa), (_, pc) in zip(a.parameters(), c.parameters())]
    assert any(diff)


def test_afkan_tau_init_is_sqrt_fan_in():
    model = init_model(small_spec(widths=(784, 64, 10)))
    assert model.layers[0].tau.data[0] == 28.0
    ms = init_model(small_spec(mode="multistep"))
    assert ms.layers[0].tau is None


def test_kaiming_bound_on_dense_weights():
    model = init_model(small_spec(widths=(784, 64, 10)))
    w = model.layers[0].w_out.data
    bound = np.sqrt(6.0 / 784)
    assert np.max(np.abs(w)) <= bound
    assert np.max(np.abs(w)) > 0.5 * bound


def test_global_attention_weights_sum_to_one(monkeypatch):
    captured = []
    real = T.softmax

    def spy(x, axis=-1, temperature=None):
        out = real(x, axis=axis, temperature=temperature)
        captured.append((out, axis, temperature))
        return out

    monkeypatch.setattr("afkan.layers.T.softmax", spy)
    model = init_model(small_spec(mode="global_attn", widths=(12, 10)))
    model(np.random.default_rng(2).uniform(0, 1, (5, 12)))
    assert len(captured) == 1
    attn, axis, temp = captured[0]
    assert axis == -1
    assert temp is model.layers[0].tau
    assert attn.shape == (5, 12)
    assert np.max(np.abs(attn.data.sum(axis=-1) - 1.0)) < 1e-9


def test_spatial_attention_weights_sum_to_one(monkeypatch):
    captured = []
    real = T.softmax

    def spy(x, axis=-1, temperature=None):
        out = real(x, axis=axis, temperature=temperature)
        captured.append((out, axis))
        return out

    monkeypatch.setattr("afkan.layers.T.softmax", spy)
    model = init_model(small_spec(mode="spatial_attn", widths=(12, 10)))
    model(np.random.default_rng(2).uniform(0, 1, (5, 12)))
    attn, axis = captured[0]
    assert axis == -2
    assert attn.shape == (5, 6, 12)
    assert np.max(np.abs(attn.data.sum(axis=-2) - 1.0)) < 1e-9


def test_multistep_uniform_mix_is_mean_over_windows():
    model = init_model(small_spec(mode="multistep", pln="none",
                                  widths=(12, 10)))
    layer = model.layers[0]
    n = layer.mix_w.shape[0]
    layer.mix_w.data = np.full((n, 1), 1.0 / n)
    layer.mix_b.data = np.zeros(1)
    x = np.random.default_rng(3).uniform(0, 1, (4, 12))

    xb = activation_basis(Tensor(x), layer.phase, layer.act, layer.ftype)
    xb = l2_minmax(xb)
    reduced = xb.data.mean(axis=2)
    h = oracles.act_oracle(layer.act, reduced)
    want = h @ layer.w_out.data + layer.b_out.data
    got = model(x).data
    assert np.max(np.abs(got - want)) < 1e-12


def test_relukan_dead_support_returns_bias():
    model = init_model(ModelSpec(variant="relukan", widths=(3, 5)))
    layer = model.layers[0]
    layer.bias.data = np.array([0.5, -1.0, 0.0, 2.0, 0.25])
    x = layer.phase.low.data[:, 0].reshape(1, 3)
    out = relukan_forward(layer, Tensor(x))
    assert np.array_equal(out.data, layer.bias.data.reshape(1, 5))


def test_relukan_matches_flat_window_algebra():
    model = init_model(ModelSpec(variant="relukan", widths=(4, 3), seed=5))
    layer = model.layers[0]
    x = np.random.default_rng(6).uniform(-0.5, 1.5, (2, 4))
    r = oracles.relu_window_oracle(
        x, layer.phase.low.data, layer.phase.high.data)
    want = r.reshape(2, -1) @ layer.weight.data + layer.bias.data
    got = relukan_forward(layer, Tensor(x)).data
    assert np.max(np.abs(got - want)) < 1e-12


def test_mlp_zero_input_maps_to_zero():
    model = init_model(small_spec(variant="mlp"))
    out = model(np.zeros((3, 12)))
    assert np.max(np.abs(out.data)) < 1e-12


def test_mlp_hidden_activation_only_between_layers():
    model = init_model(small_spec(variant="mlp", act="relu",
                                  widths=(6, 4, 3)))
    x = np.random.default_rng(7).uniform(-1, 1, (5, 6))
    h = model.layers[0]
    z = oracles.layer_norm_oracle(x, h.norm.gain.data, h.norm.bias.data,
                                  h.norm.eps) @ h.weight.data
    z = np.maximum(z, 0.0)
    o = model.layers[1]
    want = oracles.layer_norm_oracle(z, o.norm.gain.data, o.norm.bias.data,
                                     o.norm.eps) @ o.weight.data
    got = model(x).data
    assert np.max(np.abs(got - want)) < 1e-12
    # the last layer output keeps its negative half
    assert got.min() < 0


def test_mlp_gradients():
    model = init_model(small_spec(variant="mlp", widths=(6, 5, 4)))
    x = Tensor(np.random.default_rng(8).uniform(0, 1, (3, 6)))

    def loss():
        return (model(x) ** 2).sum()

    assert grad_check(loss, model.layers[0].weight) < 1e-6
    assert grad_check(loss, model.layers[1].norm.gain) < 1e-6


def test_basis_kan_single_center_contribution():
    # one center at 0 with unit width turns each feature into
    # exp(-h^2/2); a hand-built layer makes the algebra explicit
    w = np.array([[1.0, 0.0], [0.0, 2.0], [1.0, 1.0]])
    layer = BasisKanLayer(
        d_in=3, d_out=2, family="grbf",
        centers=np.array([0.0]), width=1.0,
        norm=NormParams("none"),
        weight=Tensor(w, requires_grad=True),
        bias=Tensor(np.array([0.1, -0.2]), requires_grad=True))
    x = np.array([[0.5, -1.0, 0.0]])
    phi = np.exp(-x ** 2 / 2.0)
    want = phi @ w + layer.bias.data
    got = basis_kan_forward(layer, Tensor(x)).data
    assert got.shape == (1, 2)
    assert np.max(np.abs(got - want)) < 1e-12


@pytest.mark.parametrize("family", ["grbf", "rswaf"])
def test_basis_kan_matches_scalar_loop(family):
    model = init_model(small_spec(variant=family, widths=(2, 3),
                                  num_centers=5, seed=9))
    layer = model.layers[0]
    x = np.random.default_rng(10).uniform(-1, 1, (4, 2))
    h = oracles.layer_norm_oracle(x, layer.norm.gain.data,
                                  layer.norm.bias.data, layer.norm.eps)
    radial = oracles.grbf_oracle if family == "grbf" else oracles.rswaf_oracle
    phi = radial(h, layer.centers, layer.width)
    want = np.zeros((4, 3))
    for b in range(4):
        for o in range(3):
            acc = layer.bias.data[o]
            for j in range(2):
                for c in range(5):
                    acc += phi[b, j, c] * layer.weight.data[j * 5 + c, o]
            want[b, o] = acc
    got = model(x).data
    assert np.max(np.abs(got - want)) < 1e-10


def test_parameter_listing_is_stable_and_complete():
    model = init_model(small_spec())
    names = [n for n, _ in model.parameters()]
    assert names == [n for n, _ in model.parameters()]
    assert len(names) == len(set(names))
    assert model.num_params() == sum(p.data.size
                                     for _, p in model.parameters())
    # multistep drops the temperature parameter entirely
    ms = init_model(small_spec(mode="multistep"))
    assert not any("tau" in n for n, _ in ms.parameters())
    assert any("tau" in n for n, _ in model.parameters())


def test_batch_norm_buffers_listed_and_updated():
    model = init_model(small_spec(pln="batch", widths=(6, 5)))
    names = [n for n, _ in model.buffers()]
    assert names == ["0.norm.running_mean", "0.norm.running_var"]
    before = model.layers[0].norm.running_mean.copy()
    model(np.random.default_rng(11).uniform(0, 1, (8, 6)), training=True)
    assert not np.array_equal(model.layers[0].norm.running_mean, before)


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    model = init_model(small_spec(pln="batch", seed=3))
    x = np.random.default_rng(12).uniform(0, 1, (8, 12))
    model(x, training=True)
    path = tmp_path / "model.npz"
    save_model(model, path)
    clone = load_model(path)
    for (na, pa), (nb, pb) in zip(model.parameters(), clone.parameters()):
        assert na == nb
        assert np.array_equal(pa.data, pb.data)
    for (na, ba), (nb, bb) in zip(model.buffers(), clone.buffers()):
        assert na == nb
        assert np.array_equal(ba, bb)
    y0 = model(x).data
    y1 = clone(x).data
    assert np.array_equal(y0, y1)


def test_checkpoint_version_gate(tmp_path):
    model = init_model(ModelSpec(variant="mlp", widths=(4, 3)))
    path = tmp_path / "model.npz"
    save_model(model, path)
    import json

    with np.load(path, allow_pickle=False) as bundle:
        meta = json.loads(str(bundle["meta"]))
        arrays = {k: bundle[k] for k in bundle.files if k != "meta"}
    meta["version"] = 99
    np.savez(path, meta=np.array(json.dumps(meta)), **arrays)
    with pytest.raises(ValueError, match="version"):
        load_model(path)


@pytest.mark.parametrize("mode", MODES)
def test_afkan_modes_forward_and_grad(mode):
    model = init_model(small_spec(mode=mode, widths=(6, 4)))
    x = Tensor(np.random.default_rng(13).uniform(0, 1, (3, 6)))

    def loss():
        return (model(x, training=True) ** 2).sum()

    assert grad_check(loss, model.layers[0].mix_w) < 1e-4
    assert grad_check(loss, model.layers[0].phase.low) < 1e-4
