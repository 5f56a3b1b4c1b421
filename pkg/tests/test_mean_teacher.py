import math

import numpy as np
import pytest

from wifissl.ap_select import apply_mask, build_mask
from wifissl.mean_teacher import (
    LOG_COLUMNS,
    DivergenceError,
    SslConfig,
    clone,
    ema_half_life,
    fit_supervised,
    holdout_split,
    pretrain,
    ssl_step,
    ssl_train,
    supervised_step,
    total_loss,
    write_log,
)
from wifissl.models import build_cnnloc, build_simo
from wifissl.nn import AdamState, OptimState, ReduceOnPlateau, SchemaError
from wifissl.nn.params import Parameters
from wifissl.preprocess import encode_labels, features
from wifissl.rng import Rng


@pytest.fixture(scope="module")
def setup(small_train):
    mask = build_mask(small_train)
    d = apply_mask(small_train, mask)
    spec = build_simo(len(mask))
    return spec, encode_labels(d, convention=spec.coord_scale)


def _opt(spec, params):
    return OptimState(AdamState.for_params(params), spec.lr(), ReduceOnPlateau())


def test_total_loss_arithmetic():
    assert total_loss(1.0, 0.5, 6.0) == 4.0


def test_ema_scalar_example():
    t = Parameters({"w.0.W": np.array([1.0])})
    s = Parameters({"w.0.W": np.array([0.0])})
    assert t.blend(s, 0.999)["w.0.W"][0] == 0.999


def test_clone_independence():
    theta = Parameters({"w.0.W": Rng(0).normal(4)})
    s, t = clone(theta)
    assert s.equals(theta) and t.equals(theta)
    s["w.0.W"][0] += 1
    assert t.equals(theta) and not s.equals(theta)
    assert clone(clone(theta)[0])[1].equals(theta)


def test_half_lives():
    assert ema_half_life(0.999) == pytest.approx(692.8, abs=0.1)
    assert ema_half_life(0.9) == pytest.approx(6.58, abs=0.01)


def test_presets():
    h, o = SslConfig.hybrid(), SslConfig.online()
    assert (h.alpha, h.wc, h.scheduler_patience) == (0.999, 6.0, 6)
    assert (o.alpha, o.wc, o.scheduler_patience) == (0.9, 10.0, 10)
    for c in (h, o):
        assert (c.batch_size, c.early_stop_patience, c.scheduler_factor) == (32, 12, 0.75)


def test_ssl_step_identities(setup):
    spec, lab = setup
    cfg = SslConfig.hybrid()
    theta = spec.init(0)
    student, teacher = clone(theta)
    teacher_before = teacher.clone()
    x_u = lab.features[64:96] * 0.9
    opt = _opt(spec, student)
    rng = Rng(1)
    for _ in range(3):
        t_old = teacher
        student, teacher, lb = ssl_step(spec, student, teacher, lab.take(np.arange(32)), x_u, cfg, opt, rng)
        assert lb.lt == lb.ld + cfg.wc * lb.lc
        for k in teacher:
            expected = cfg.alpha * t_old[k] + (1 - cfg.alpha) * student[k]
            assert np.array_equal(teacher[k], expected)
    # the teacher passed in is never written to
    assert t_old is not teacher and clone(theta)[1].equals(teacher_before)


def test_alpha_one_freezes_teacher(setup):
    spec, lab = setup
    cfg = SslConfig.hybrid(alpha=1.0)
    student, teacher = clone(spec.init(0))
    ref = teacher.clone()
    opt = _opt(spec, student)
    for _ in range(3):
        student, teacher, _ = ssl_step(spec, student, teacher, lab.take(np.arange(32)), lab.features[:32], cfg, opt, Rng(0))
    assert teacher.equals(ref) and not student.equals(ref)


def test_zero_weight_matches_supervised_step(setup):
    spec, lab = setup
    cfg = SslConfig.hybrid(wc=0.0)
    theta = spec.init(0)
    batch = lab.take(np.arange(32))
    a = theta.clone()
    supervised_step(spec, a, batch, _opt(spec, a), Rng(3))
    b, t = clone(theta)
    b, _, _ = ssl_step(spec, b, t, batch, lab.features[40:72], cfg, _opt(spec, b), Rng(3))
    assert a.equals(b)


def test_consistency_zero_for_identical_models_and_data(setup):
    spec, lab = setup
    s, t = clone(spec.init(0))
    batch = lab.take(np.arange(32))
    _, _, lb = ssl_step(spec, s, t, batch, batch.features, SslConfig.hybrid(), _opt(spec, s), Rng(0))
    assert lb.lc == 0.0


def test_schema_mismatch(setup):
    spec, lab = setup
    s = spec.init(0)
    other = build_simo(spec.input_width + 4).init(0)
    with pytest.raises(SchemaError):
        ssl_step(spec, s, other, lab.take(np.arange(4)), lab.features[:4], SslConfig.hybrid(), _opt(spec, s), Rng(0))


def test_pretrain_zero_epochs_returns_init(setup):
    spec, lab = setup
    init = spec.init(4)
    res = pretrain(spec, lab, SslConfig.hybrid(pretrain_max_epochs=0), init=init)
    assert res.params.equals(init) and res.history == []


def test_one_batch_two_epochs_descends(setup):
    spec, lab = setup
    one = lab.take(np.arange(32))
    cfg = SslConfig.hybrid(pretrain_max_epochs=2, holdout_fraction=0.0)
    res = pretrain(spec, one, cfg)
    assert res.history[1].ld <= res.history[0].ld


def test_holdout_disjoint():
    tr, ho = holdout_split(100, 0.1, Rng(0))
    assert len(ho) == 10 and not set(tr) & set(ho) and len(set(tr) | set(ho)) == 100
    tr, ho = holdout_split(3, 0.1, Rng(0))
    assert len(ho) == 0 and len(tr) == 3


def test_supervised_training_deterministic(setup):
    spec, lab = setup
    cfg = SslConfig.hybrid(pretrain_max_epochs=2, seed=3)
    a, b = pretrain(spec, lab, cfg), pretrain(spec, lab, cfg)
    assert a.params.equals(b.params)
    assert [r.row() for r in a.history] == [r.row() for r in b.history]


def test_divergence_reports_epoch(setup):
    spec, lab = setup
    bad = lab.take(np.arange(64))
    bad.features[:] = np.nan
    with pytest.raises(DivergenceError) as e:
        fit_supervised(spec, spec.init(0), bad, SslConfig.hybrid(), 3)
    assert e.value.epoch == 1


def test_ssl_train_degenerate_returns_pretrained(setup):
    spec, lab = setup
    theta = spec.init(0)
    cfg = SslConfig.hybrid(alpha=1.0, wc=0.0, max_epochs=2)
    res = ssl_train(spec, theta, lab, lab.features[:50], cfg)
    assert res.params.equals(theta)


def test_ssl_train_log_and_best_teacher(setup, tmp_path):
    spec, lab = setup
    theta = spec.init(0)
    cfg = SslConfig.online(max_epochs=3)
    res = ssl_train(spec, theta, lab.take(np.arange(100)), lab.features[100:], cfg, dev=lab)
    assert len(res.history) == 3
    lts = [r.lt for r in res.history]
    assert res.best_epoch == int(np.argmin(lts)) + 1
    for r in res.history:
        assert math.isclose(r.lt, r.ld + cfg.wc * r.lc, rel_tol=1e-12)
        assert 0 <= r.gamma_dev <= 1
    write_log(res.history, tmp_path / "m.csv")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0].split(",") == list(LOG_COLUMNS) and len(lines) == 4
    again = ssl_train(spec, theta, lab.take(np.arange(100)), lab.features[100:], cfg, dev=lab)
    assert again.params.equals(res.params)


def test_ssl_train_rejects_empty(setup):
    spec, lab = setup
    with pytest.raises(ValueError):
        ssl_train(spec, spec.init(0), lab, np.zeros((0, spec.input_width)), SslConfig.hybrid())


def test_cnnloc_ssl_step_runs():
    from synth import make_uji

    d = make_uji(64, seed=5, n_active=300)
    mask = build_mask(d)
    spec = build_cnnloc(len(mask))
    lab = encode_labels(apply_mask(d, mask), convention=spec.coord_scale)
    s, t = clone(spec.init(0))
    s, t2, lb = ssl_step(spec, s, t, lab.take(np.arange(16)), lab.features[16:32], SslConfig.hybrid(), _opt(spec, s), Rng(0))
    assert lb.lt == lb.ld + 6.0 * lb.lc and np.isfinite(lb.lt)
    for k in t2:
        assert np.array_equal(t2[k], 0.999 * t[k] + (1 - 0.999) * s[k])


def test_features_unchanged_by_training(setup, small_train):
    # the encoded batch is only read by training
    spec, lab = setup
    before = lab.features.copy()
    pretrain(spec, lab, SslConfig.hybrid(pretrain_max_epochs=1))
    assert np.array_equal(before, lab.features)
    assert features(small_train).shape[1] == 520
