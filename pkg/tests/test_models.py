import numpy as np
import pytest

from gradcheck import TOL, check
from wifissl.models import (
    ModelError,
    build,
    build_cnnloc,
    build_simo,
    conv_lengths,
    from_dict,
    head_targets,
    multi_head_backward,
    multi_head_forward,
    param_count,
    predict,
    prediction_loss,
    sae_pretrain,
)
from wifissl.preprocess import CoordScale, EncodedBatch
from wifissl.rng import Rng


def _dense(a, b):
    return a * b + b


def simo_count(w):
    e1, e2 = w // 2, w // 4
    enc = _dense(w, e1) + _dense(e1, e2)
    bf = _dense(e2, 520) + _dense(520, 520) + _dense(520, 8)
    loc = _dense(e2, 520) + 2 * _dense(520, 520) + _dense(520, 2)
    return enc + bf + loc


def cnnloc_count(w):
    e1, e = w // 2, w // 4
    enc = _dense(w, e1) + _dense(e1, e)
    conv = (99 * 22 + 99) + (66 * 99 * 22 + 66) + (33 * 66 * 22 + 33)
    flat = 33 * (e - 63)
    return enc + _dense(e, e) + _dense(e, 3) + conv + _dense(flat, 5) + conv + _dense(flat, 2)


@pytest.mark.parametrize("w, dims", [(428, (428, 214, 107)), (520, (520, 260, 130))])
def test_encoder_dims(w, dims):
    assert build_simo(w).encoder_dims == dims
    assert build_cnnloc(w).encoder_dims == dims


def test_conv_lengths():
    assert conv_lengths(130) == [109, 88, 67]
    assert conv_lengths(107) == [86, 65, 44]
    assert 33 * conv_lengths(130)[-1] == 2211
    assert 33 * conv_lengths(107)[-1] == 1452


@pytest.mark.parametrize("w", [428, 520, 300])
def test_cnnloc_flatten_width(w):
    spec = build_cnnloc(w)
    e = w // 4
    assert spec.param_shapes()["f.8.W"] == (33 * (e - 63), 5)
    assert spec.param_shapes()["l.7.W"] == (33 * (e - 63), 2)


@pytest.mark.parametrize("w", [428, 520, 80])
def test_simo_param_count(w):
    assert param_count(build_simo(w)) == simo_count(w)


@pytest.mark.parametrize("w", [428, 520])
def test_cnnloc_param_count(w):
    assert param_count(build_cnnloc(w)) == cnnloc_count(w)


def test_size_limits():
    with pytest.raises(ModelError):
        build_simo(4)
    with pytest.raises(ModelError):
        build_cnnloc(264)  # encoder output 66
    build_cnnloc(268)


def test_head_configuration():
    simo, cnn = build("simo", 428), build("cnnloc", 428)
    assert [(h.name, h.pred_loss.value, h.cons_loss and h.cons_loss.value, h.lr) for h in simo.heads] == [
        ("bf", "bce", "bce", 1e-4),
        ("l", "mse", "mse", 1e-3),
    ]
    assert [(h.name, h.pred_loss.value, h.cons_loss and h.cons_loss.value) for h in cnn.heads] == [
        ("b", "ce", None),
        ("f", "ce", "mse"),
        ("l", "mse", "mse"),
    ]
    assert simo.coord_scale is CoordScale.TANH and cnn.coord_scale is CoordScale.UNIT


def test_simo_output_ranges():
    spec = build_simo(428)
    p = spec.init(0)
    out, _ = multi_head_forward(spec, p, Rng(1).random(32 * 428).reshape(32, 428))
    assert out["bf"].shape == (32, 8) and np.all((out["bf"] > 0) & (out["bf"] < 1))
    assert out["l"].shape == (32, 2) and np.all(np.abs(out["l"]) < 1)


def test_cnnloc_output_shapes():
    spec = build_cnnloc(428)
    out, _ = multi_head_forward(spec, spec.init(0), Rng(1).random(32 * 428).reshape(32, 428))
    assert {k: v.shape for k, v in out.items()} == {"b": (32, 3), "f": (32, 5), "l": (32, 2)}
    assert np.abs(out["b"].sum(1) - 1).max() < 1e-12


def test_identical_params_identical_outputs():
    spec = build_simo(100)
    p = spec.init(3)
    x = Rng(1).random(500).reshape(5, 100)
    a, _ = multi_head_forward(spec, p, x)
    b, _ = multi_head_forward(spec, p.clone(), x)
    assert all(np.array_equal(a[k], b[k]) for k in a)


def test_batch_width_checked():
    spec = build_simo(100)
    with pytest.raises(ModelError):
        multi_head_forward(spec, spec.init(0), np.zeros((2, 99)))


def _batch(spec, n, seed=0):
    rng = Rng(seed)
    x = rng.random(n * spec.input_width).reshape(n, spec.input_width)
    b = np.eye(3)[(rng.random(n) * 3).astype(int)]
    f = np.eye(5)[(rng.random(n) * 5).astype(int)]
    c = rng.uniform(-0.9, 0.9, 2 * n).reshape(n, 2)
    if spec.coord_scale is CoordScale.UNIT:
        c = (c + 1) / 2
    return EncodedBatch(x, np.hstack([b, f]), c)


def _model_grad_check(spec, n_probe=6):
    p = spec.init(1)
    batch = _batch(spec, 3)
    targets = head_targets(spec, batch)

    def f():
        outs, _ = multi_head_forward(spec, p, batch.features)
        return prediction_loss(spec, outs, targets)[0]

    outs, caches = multi_head_forward(spec, p, batch.features, True, Rng(0))
    _, g = prediction_loss(spec, outs, targets)
    grads = multi_head_backward(spec, p, caches, g)
    worst = 0.0
    for name in p:
        size = p[name].size
        idx = sorted(set(int(i) for i in Rng(len(name)).random(n_probe) * size))
        worst = max(worst, check(f, p[name], grads[name], idx))
    return worst


def test_simo_full_gradient():
    assert _model_grad_check(build_simo(40)) < TOL


def test_cnnloc_full_gradient():
    # dropout disabled so the eval-mode loss matches the train-mode graph
    assert _model_grad_check(build_cnnloc(272, dropout=0.0), n_probe=4) < TOL


def test_missing_head_gradient_is_zero():
    spec = build_simo(40)
    p = spec.init(0)
    outs, caches = multi_head_forward(spec, p, np.ones((2, 40)), True, Rng(0))
    g = multi_head_backward(spec, p, caches, {"l": np.ones((2, 2))})
    assert g.subset("bf.").max_abs() == 0.0
    assert g.subset("encoder.").max_abs() > 0.0


def test_spec_serialization_round_trip():
    for spec in (build_simo(428), build_cnnloc(520)):
        assert from_dict(spec.to_dict()) == spec
    with pytest.raises(ModelError):
        from_dict({**build_simo(428).to_dict(), "heads": []})


def test_init_is_seeded():
    spec = build_simo(60)
    assert spec.init(5).equals(spec.init(5))
    assert not spec.init(5).equals(spec.init(6))


def test_predict_chunks_agree():
    spec = build_simo(40)
    p = spec.init(0)
    x = Rng(1).random(40 * 50).reshape(50, 40)
    a, b = predict(spec, p, x, batch_size=7), predict(spec, p, x)
    assert all(np.allclose(a[k], b[k], atol=1e-14) for k in a)


def test_sae_reconstruction_decreases():
    spec = build_cnnloc(280)
    p = spec.init(0)
    before = p.clone()
    x = Rng(2).random(128 * 280).reshape(128, 280) * (Rng(3).random(128 * 280).reshape(128, 280) > 0.7)
    hist = sae_pretrain(spec, p, x, epochs=5, seed=0)
    assert len(hist) == 6
    assert all(b < a for a, b in zip(hist, hist[1:]))
    assert not p.subset("encoder.").equals(before.subset("encoder."))
    assert p.subset("f.").equals(before.subset("f."))
