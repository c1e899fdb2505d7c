import math

import numpy as np
import pytest

from treesent.autodiff import ParamSet, Tensor, grad_check, gru_step, ops
from treesent.heads import Classifier, Decoder, GRUParams, HeadError, gru_cell, relation_features
from treesent.vocab import BOS, EOS, PAD


def _gru(rng, e=3, h=4):
    ps = ParamSet()
    p = GRUParams(ps.add("w_x", (e, 3 * h), rng=rng), ps.add("u", (h, 3 * h), rng=rng),
                  ps.add("b", (3 * h,), rng=rng))
    p.b.data[...] = rng.normal(size=3 * h)
    return ps, p


def test_gru_cell_matches_formula(double, rng):
    _, p = _gru(rng)
    h, x = rng.normal(size=(2, 4)), rng.normal(size=(2, 3))
    sig = lambda v: 1 / (1 + np.exp(-v))
    xz = x @ p.w_x.data + p.b.data
    u = p.u.data
    z = sig(xz[:, :4] + h @ u[:, :4])
    r = sig(xz[:, 4:8] + h @ u[:, 4:8])
    cand = np.tanh(xz[:, 8:] + (r * h) @ u[:, 8:])
    ref = (1 - z) * h + z * cand
    np.testing.assert_allclose(gru_cell(p, Tensor(h), Tensor(x)).data, ref, atol=1e-12)
    fused = gru_step(Tensor(xz), Tensor(h), p.u)
    np.testing.assert_allclose(fused.data, ref, atol=1e-12)


def test_gru_saturation_limits(double, rng):
    _, p = _gru(rng)
    h, x = rng.normal(size=(1, 4)), rng.normal(size=(1, 3))
    p.b.data[:4] = -1e3  # update gate closed: state carried over
    np.testing.assert_allclose(gru_cell(p, Tensor(h), Tensor(x)).data, h, atol=1e-12)
    p.b.data[:4] = 1e3  # update gate open: pure candidate
    p.b.data[4:8] = -1e3  # reset closed: candidate ignores h
    xz = x @ p.w_x.data + p.b.data
    np.testing.assert_allclose(gru_cell(p, Tensor(h), Tensor(x)).data, np.tanh(xz[:, 8:]), atol=1e-12)


def test_gru_gradients(double, rng):
    ps, p = _gru(rng)
    ps.add("h", (2, 4), rng=rng)
    ps.add("x", (2, 3), rng=rng)
    w = rng.normal(size=(2, 4))
    f = lambda: ops.scale(ops.sum(ops.mul(gru_cell(p, ps["h"], ps["x"]), w)), 0.01)
    assert grad_check(f, ps) < 1e-6


def test_zero_classifier_is_uniform(rng):
    ps = ParamSet()
    clf = Classifier(ps, "c", 6, 5, hidden=8, rng=rng)
    ps["c.w2"].data[...] = 0
    logits = clf(Tensor(rng.normal(size=(3, 6))))
    probs = np.exp(logits.data) / np.exp(logits.data).sum(axis=1, keepdims=True)
    np.testing.assert_allclose(probs, 0.2)


def test_classifier_dropout_only_in_training(rng):
    ps = ParamSet()
    clf = Classifier(ps, "c", 6, 3, hidden=16, dropout=0.5, rng=rng)
    x = Tensor(rng.normal(size=(4, 6)))
    np.testing.assert_array_equal(clf(x).data, clf(x).data)
    a = clf(x, training=True, rng=np.random.default_rng(1)).data
    b = clf(x, training=True, rng=np.random.default_rng(2)).data
    assert not np.array_equal(a, b)


def test_classifier_validation(rng):
    with pytest.raises(HeadError):
        Classifier(ParamSet(), "c", 4, 1, rng=rng)
    clf = Classifier(ParamSet(), "c", 4, 2, hidden=3, rng=rng)
    with pytest.raises(ops.ShapeError):
        clf(Tensor(np.zeros((1, 5))))


def test_classifier_gradients(double, rng):
    ps = ParamSet()
    clf = Classifier(ps, "c", 4, 3, hidden=5, rng=rng)
    ps["c.b1"].data[...] = 0.1  # keep ReLU inputs away from the kink
    ps.add("x", (3, 4), rng=rng)
    f = lambda: ops.scale(ops.cross_entropy(clf(ps["x"]), np.array([0, 2, 1])), 0.01)
    assert grad_check(f, ps) < 1e-6


def test_relation_features(double, rng):
    s1, s2 = rng.normal(size=(2, 3)), rng.normal(size=(2, 3))
    out = relation_features(Tensor(s1), Tensor(s2)).data
    np.testing.assert_allclose(out, np.concatenate([s1, s2, s1 - s2, s1 * s2], axis=1))
    same = relation_features(Tensor(s1), Tensor(s1)).data
    assert not same[:, 6:9].any()
    swapped = relation_features(Tensor(s2), Tensor(s1)).data
    np.testing.assert_allclose(swapped[:, 9:], out[:, 9:])
    with pytest.raises(ops.ShapeError):
        relation_features(Tensor(s1), Tensor(s2[:, :2]))


def _decoder(rng, enc_dim=4, vocab=9):
    ps = ParamSet()
    return ps, Decoder(ps, "d", enc_dim, vocab, embed_dim=3, rng=rng)


def test_uniform_decoder_loss_is_log_vocab(rng):
    ps, dec = _decoder(rng)
    ps["d.out.w"].data[...] = 0
    targets = np.array([[BOS, 5, 6, EOS], [BOS, 7, EOS, PAD]])
    logits, loss = dec.teacher_forced(Tensor(rng.normal(size=(2, 4))), targets)
    assert logits.shape == (2, 3, 9)
    assert float(loss.data) == pytest.approx(math.log(9), rel=1e-6)


def test_single_step_target(rng):
    _, dec = _decoder(rng)
    logits, loss = dec.teacher_forced(Tensor(rng.normal(size=(1, 4))), np.array([[BOS, EOS]]))
    assert logits.shape == (1, 1, 9)
    z = logits.data[0, 0].astype(np.float64)
    ref = np.log(np.exp(z - z.max()).sum()) + z.max() - z[EOS]
    assert float(loss.data) == pytest.approx(ref, rel=1e-5)


def test_teacher_forcing_validation(rng):
    _, dec = _decoder(rng)
    enc = Tensor(np.zeros((1, 4)))
    with pytest.raises(HeadError):
        dec.teacher_forced(enc, np.array([[BOS]]))
    with pytest.raises(HeadError):
        dec.teacher_forced(enc, np.array([[5, EOS]]))


def test_greedy_stops_at_eos(rng):
    ps, dec = _decoder(rng)
    ps["d.out.w"].data[...] = 0
    ps["d.out.b"].data[...] = 0
    ps["d.out.b"].data[EOS] = 5
    assert dec.greedy(Tensor(rng.normal(size=(2, 4))), 6) == [[], []]
    ps["d.out.b"].data[EOS] = 0
    ps["d.out.b"].data[7] = 5
    assert dec.greedy(Tensor(rng.normal(size=(1, 4))), 3) == [[7, 7, 7]]
    with pytest.raises(HeadError):
        dec.greedy(Tensor(np.zeros((1, 4))), 0)


def test_decoder_gradients(double, rng):
    ps, dec = _decoder(rng, enc_dim=3, vocab=6)
    ps.add("enc", (2, 3), rng=rng)
    targets = np.array([[BOS, 4, 5, EOS], [BOS, 5, EOS, PAD]])
    f = lambda: ops.scale(dec.teacher_forced(ps["enc"], targets)[1], 0.01)
    assert grad_check(f, ps) < 1e-5
