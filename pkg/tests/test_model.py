import json

import numpy as np
import pytest

from dilconv import model, ops
from dilconv.errors import ConfigError, FormatError, ShapeError, StateError
from dilconv.model import DL, FL, SL, LayerSpec, NetworkConfig
from dilconv.tensor import Shape4

from oracles import naive_conv2d, naive_dense, numeric_grad, rel_error


def tiny(cols=8, filters=2, classes=3):
    return NetworkConfig(Shape4(1, 1, 3, cols),
                         (DL(3, 3, filters, (1, 2)), SL(1, 2, filters, (1, 2)), FL(5), FL(classes, "none")), classes)


def test_presets_match_layer_listing():
    v1i = model.preset("v1_individual")
    assert [l.kind for l in v1i.layers] == ["DL", "SL", "DL", "SL", "FL", "FL"]
    assert [l.units for l in v1i.layers[4:]] == [1024, 6]
    c = v1i.layers[0].conv
    assert (c.filter_rows, c.filter_cols, c.out_channels, c.dilation_rows, c.dilation_cols) == (3, 20, 32, 1, 2)
    v2 = model.preset("v2")
    assert len(v2.layers) == 8
    third = v2.layers[4].conv
    assert (third.out_channels, third.dilation_rows, third.dilation_cols) == (64, 1, 1)
    v1s = model.preset("v1_split")
    sl2 = v1s.layers[3].conv
    assert (sl2.filter_cols, sl2.stride_rows, sl2.stride_cols) == (2, 1, 2)
    assert v1s.input_shape.cols == 100
    with pytest.raises(ConfigError):
        model.preset("v3")


@pytest.mark.parametrize("name, shapes, flat", [
    ("v1_individual", [(1, 32, 3, 200), (1, 32, 3, 50), (1, 32, 3, 50), (1, 32, 3, 12), (1, 1024), (1, 6)], 1152),
    ("v1_split", [(1, 32, 3, 100), (1, 32, 3, 25), (1, 32, 3, 25), (1, 32, 3, 12), (1, 1024), (1, 6)], 1152),
    ("v2", [(1, 32, 3, 200), (1, 32, 3, 100), (1, 32, 3, 100), (1, 32, 3, 50), (1, 64, 3, 50), (1, 64, 3, 25),
            (1, 512), (1, 6)], 4800),
])
def test_shape_tables(name, shapes, flat):
    cfg = model.preset(name)
    assert model.shape_check(cfg) == shapes
    assert model.flatten_size(cfg) == flat


@pytest.mark.parametrize("name", ["v1_individual", "v1_split", "v2"])
def test_strided_layers_preserve_rows(name):
    cfg = model.preset(name)
    rows = cfg.input_shape.rows
    for layer, shape in zip(cfg.layers, model.shape_check(cfg)):
        if layer.kind == "SL":
            assert shape[2] == rows


def test_infeasible_layer_is_named():
    layers = (SL(1, 4, 2, (1, 4)), SL(1, 4, 2, (1, 4)), FL(3, "none"))
    with pytest.raises(ShapeError, match="layer 1"):
        NetworkConfig(Shape4(1, 1, 3, 6), layers, 3)


@pytest.mark.parametrize("layers, classes", [
    ((DL(3, 3, 2), FL(3)), 3),                   # last layer has an activation
    ((DL(3, 3, 2), FL(4, "none")), 3),           # wrong class count
    ((FL(4), DL(3, 3, 2), FL(3, "none")), 3),    # conv after FL
    ((DL(3, 3, 2),), 3),
])
def test_network_config_validation(layers, classes):
    with pytest.raises(ConfigError):
        NetworkConfig(Shape4(1, 1, 3, 8), layers, classes)


def test_layer_spec_invariants():
    with pytest.raises(ConfigError):
        FL(0)
    with pytest.raises(ConfigError):
        LayerSpec("XL", units=3)
    with pytest.raises(ConfigError):
        DL(3, 3, 2, (0, 1))
    spec = SL(1, 4, 32, (1, 4))
    assert LayerSpec.from_dict(spec.to_dict()) == spec
    cfg = model.preset("v2")
    assert NetworkConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_init_params():
    cfg = model.preset("v1_split")
    a, b = model.init_params(cfg, 7), model.init_params(cfg, 7)
    for x, y in zip(a.tensors(), b.tensors()):
        assert np.array_equal(x, y)
    assert all(not bias.any() for bias in a.biases)
    assert not np.array_equal(a.weights[0], model.init_params(cfg, 8).weights[0])
    # 1152 x 1024 dense weights: uniform(-L, L) has sd L / sqrt(3)
    w = a.weights[4]
    limit = np.sqrt(6.0 / 1152)
    assert np.max(np.abs(w)) <= limit
    assert abs(w.std() - limit / np.sqrt(3)) < 0.1 * limit / np.sqrt(3)
    conv = a.weights[0]  # fan_in 1*3*10 = 30
    assert np.max(np.abs(conv)) <= np.sqrt(6.0 / 30)
    assert [s.t for s in a.adam] == [0] * len(a.tensors())


def test_zero_weights_give_uniform_softmax():
    cfg = tiny()
    p = model.init_params(cfg, 0)
    p.set_tensors([np.zeros_like(t) for t in p.tensors()])
    logits, _ = model.forward(p, cfg, np.random.default_rng(0).normal(size=(4, 1, 3, 8)))
    assert not logits.any()
    _, probs = ops.softmax_xent_forward(logits, [0, 1, 2, 0])
    assert np.allclose(probs, 1 / 3, rtol=0, atol=1e-15)


def test_forward_batch_independence_and_determinism(kernels):
    cfg = model.preset("v1_split")
    p = model.init_params(cfg, 1)
    x = np.random.default_rng(2).normal(size=(5, 1, 3, 100))
    full, _ = model.forward(p, cfg, x)
    for i in range(5):
        assert np.array_equal(model.forward(p, cfg, x[i:i + 1])[0][0], full[i])
    assert np.array_equal(model.forward(p, cfg, x)[0], full)


def test_forward_shape_error():
    cfg = tiny()
    with pytest.raises(ShapeError):
        model.forward(model.init_params(cfg, 0), cfg, np.zeros((2, 1, 3, 9)))


def test_forward_matches_oracle_composition(kernels):
    cfg = tiny()
    p = model.init_params(cfg, 3)
    for b in p.biases:
        b[:] = np.random.default_rng(4).normal(size=b.shape)
    x = np.random.default_rng(5).normal(size=(2, 1, 3, 8))
    h = np.maximum(naive_conv2d(x, p.weights[0], p.biases[0], 1, 2, 1, 1, "same"), 0)
    h = np.maximum(naive_conv2d(h, p.weights[1], p.biases[1], 1, 1, 1, 2, "valid"), 0)
    h = np.maximum(naive_dense(h.reshape(2, -1), p.weights[2], p.biases[2]), 0)
    want = naive_dense(h, p.weights[3], p.biases[3])
    np.testing.assert_allclose(model.forward(p, cfg, x)[0], want, rtol=0, atol=1e-12)


def test_backward_zero_d_logits_gives_l2_term():
    cfg = tiny()
    p = model.init_params(cfg, 0)
    x = np.random.default_rng(0).normal(size=(3, 1, 3, 8))
    logits, cache = model.forward(p, cfg, x)
    grads = model.backward(p, cfg, cache, np.zeros_like(logits), 1e-3)
    for i, w in enumerate(p.weights):
        np.testing.assert_allclose(grads[2 * i], 2e-3 * w, rtol=1e-15, atol=0)
        assert not grads[2 * i + 1].any()


def test_backward_without_cache():
    cfg = tiny()
    with pytest.raises(StateError):
        model.backward(model.init_params(cfg, 0), cfg, None, np.zeros((1, 3)))


def end_to_end_errors(seed, cols=8, filters=2, lam=0.0, h=1e-5):
    """Worst relative error over all parameter tensors of a small network."""
    rng = np.random.default_rng(seed)
    cfg = tiny(cols, filters)
    p = model.init_params(cfg, seed)
    for b in p.biases:
        b[:] = 0.1 * rng.normal(size=b.shape)
    x = rng.normal(size=(3, 1, 3, cols))
    y = rng.integers(0, 3, 3)
    _, grads, _ = model.loss_and_grads(p, cfg, x, y, lam)
    num = numeric_grad(lambda: model.loss_and_grads(p, cfg, x, y, lam)[0], p.tensors(), h)
    return [rel_error(a, n) for a, n in zip(grads, num)]


@pytest.mark.parametrize("seed", range(4))
def test_end_to_end_gradients(seed, kernels):
    assert max(end_to_end_errors(seed, cols=8 + 4 * (seed % 3), filters=2 + seed % 3)) < 1e-4


def test_end_to_end_gradients_with_l2():
    assert max(end_to_end_errors(11, lam=1e-2)) < 1e-4


def test_gradients_finite_for_large_inputs():
    cfg = tiny()
    p = model.init_params(cfg, 0)
    x = np.random.default_rng(0).uniform(-1e3, 1e3, size=(4, 1, 3, 8))
    loss, grads, _ = model.loss_and_grads(p, cfg, x, [0, 1, 2, 0])
    assert np.isfinite(loss)
    assert all(np.all(np.isfinite(g)) for g in grads)


def test_predict_chunks_agree():
    cfg = tiny()
    p = model.init_params(cfg, 0)
    x = np.random.default_rng(0).normal(size=(7, 1, 3, 8))
    assert np.array_equal(model.predict(p, cfg, x, 3), model.forward(p, cfg, x)[0])
    assert model.predict(p, cfg, x[:0]).shape == (0, 3)


def test_checkpoint_round_trip(tmp_path):
    cfg = model.preset("v1_split")
    p = model.init_params(cfg, 0)
    path = tmp_path / "m.ckpt"
    model.save_checkpoint(path, cfg, p, {"note": "x"})
    cfg2, p2, extra = model.load_checkpoint(path)
    assert cfg2 == cfg and cfg2.digest() == cfg.digest()
    assert extra == {"note": "x"}
    for a, b in zip(p.tensors(), p2.tensors()):
        assert a.tobytes() == b.tobytes()
    assert model.dump_checkpoint(cfg2, p2, extra) == path.read_bytes()


def test_checkpoint_validation():
    cfg = tiny()
    blob = bytearray(model.dump_checkpoint(cfg, model.init_params(cfg, 0)))
    with pytest.raises(FormatError):
        model.load_checkpoint(b"XXXXXXXX" + bytes(blob[8:]))
    bad = blob.copy()
    bad[12] ^= 0xFF  # digest byte
    with pytest.raises(FormatError, match="digest"):
        model.load_checkpoint(bytes(bad))
    with pytest.raises(FormatError):
        model.load_checkpoint(bytes(blob[:-16]))


def test_digest_depends_on_config():
    assert model.preset("v1_split").digest() == model.preset("v1_split").digest()
    assert model.preset("v1_split").digest() != model.preset("v1_individual").digest()
