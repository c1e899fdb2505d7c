import threading

import numpy as np
import pytest

from treesent.autodiff import (
    ParamSet,
    ShapeError,
    Tape,
    Tensor,
    backward,
    current_precision,
    grad_check,
    gru_step,
    lstm_gates,
    lstm_step,
    no_tape,
    numeric_gradient,
    ops,
    precision,
    tree_gates,
    tree_step,
)


def _params(rng, **shapes):
    ps = ParamSet()
    for name, shape in shapes.items():
        ps.add(name, shape, rng=rng)
        ps[name].data[...] = rng.normal(size=shape)
    return ps


# Probes are scaled by 0.01: central differences at eps=1e-5 carry rounding
# noise near 1e-11 * |f|, which the 1e-8 floor of the relative error only
# absorbs when |f| is small.
def _probe(out, weights):
    return ops.scale(ops.sum(ops.mul(out, weights)), 0.01)


UNARY = [
    ("sigmoid", ops.sigmoid),
    ("tanh", ops.tanh),
    ("exp", ops.exp),
    ("softmax", ops.softmax),
    ("log_softmax", ops.log_softmax),
    ("transpose", lambda x: ops.transpose(x)),
    ("reshape", lambda x: ops.reshape(x, (12,))),
    ("slice", lambda x: ops.getitem(x, (slice(1, 3), slice(None, None, 2)))),
    ("fancy", lambda x: ops.getitem(x, np.array([0, 2, 2, 1]))),
    ("sum_axis", lambda x: ops.sum(x, axis=0)),
    ("mean", lambda x: ops.mean(x, axis=1, keepdims=True)),
    ("max", lambda x: ops.max(x, axis=1)),
    ("cumsum", lambda x: ops.cumsum(x, axis=1)),
    ("scale", lambda x: ops.scale(x, -2.5)),
]


@pytest.mark.parametrize("name,fn", UNARY, ids=[u[0] for u in UNARY])
def test_unary_gradients(double, rng, name, fn):
    ps = _params(rng, x=(3, 4))
    w = Tensor(rng.normal(size=fn(ps["x"]).shape))
    assert grad_check(lambda: _probe(fn(ps["x"]), w), ps) < 1e-6


def test_log_and_relu_away_from_kinks(double, rng):
    ps = _params(rng, x=(3, 4))
    ps["x"].data[...] = rng.uniform(0.5, 2.0, size=(3, 4)) * rng.choice([-1, 1], size=(3, 4))
    w = Tensor(rng.normal(size=(3, 4)))
    assert grad_check(lambda: _probe(ops.relu(ps["x"]), w), ps) < 1e-6
    ps["x"].data[...] = np.abs(ps["x"].data)
    assert grad_check(lambda: _probe(ops.log(ps["x"]), w), ps) < 1e-6


BINARY = [
    ("add_broadcast", ops.add, (3, 4), (4,)),
    ("sub_broadcast", ops.sub, (3, 1), (3, 4)),
    ("mul_broadcast", ops.mul, (2, 3, 4), (3, 1)),
    ("matmul", ops.matmul, (2, 3, 4), (4, 5)),
    ("concat", lambda a, b: ops.concat([a, b], axis=0), (2, 4), (3, 4)),
    ("stack", lambda a, b: ops.stack([a, b], axis=1), (3, 4), (3, 4)),
]


@pytest.mark.parametrize("name,fn,sa,sb", BINARY, ids=[b[0] for b in BINARY])
def test_binary_gradients(double, rng, name, fn, sa, sb):
    ps = _params(rng, a=sa, b=sb)
    w = Tensor(rng.normal(size=fn(ps["a"], ps["b"]).shape))
    assert grad_check(lambda: _probe(fn(ps["a"], ps["b"]), w), ps) < 1e-6


def test_where_embedding_gather_and_masked_ops(double, rng):
    ps = _params(rng, a=(2, 5, 3), b=(2, 5, 3), table=(6, 3))
    mask = np.array([[1, 1, 0, 1, 0], [1, 0, 0, 0, 0]], dtype=bool)
    ids = np.array([[1, 5, 1], [0, 2, 2]])
    w2 = Tensor(rng.normal(size=(2, 3)))

    def f():
        sel = ops.where(mask[:, :, None], ps["a"], ps["b"])
        pooled = ops.add(ops.masked_max(sel, mask), ops.masked_mean(ps["b"], mask))
        emb = ops.sum(ops.embedding(ps["table"], ids), axis=1)
        att = ops.masked_softmax(ops.sum(ps["a"], axis=2), mask)
        rows = ops.gather_rows([ops.reshape(ps["a"], (10, 3)), ps["table"]],
                               np.array([0, 1, -1, 1]), np.array([3, 5, 0, 5]))
        return ops.add(ops.add(_probe(pooled, w2), _probe(emb, w2)),
                       ops.add(_probe(att, Tensor(mask * 1.0)), ops.scale(ops.sum(rows), 0.01)))

    assert grad_check(f, ps) < 1e-6


def test_cross_entropy_gradient_and_value(double, rng):
    ps = _params(rng, z=(2, 3, 5))
    targets = np.array([[0, 4, 2], [1, 1, 3]])
    mask = np.array([[1, 1, 0], [1, 0, 1]], dtype=bool)
    assert grad_check(lambda: ops.scale(ops.cross_entropy(ps["z"], targets, mask), 0.01), ps) < 1e-6
    z = ps["z"].data
    logp = z - np.log(np.exp(z).sum(-1, keepdims=True))
    expect = -np.mean([logp[b, t, targets[b, t]] for b in range(2) for t in range(3) if mask[b, t]])
    assert float(ops.cross_entropy(ps["z"], targets, mask).data) == pytest.approx(expect, rel=1e-12)


def test_uniform_logits_give_log_class_count(double):
    logits = Tensor(np.zeros((4, 7)))
    assert float(ops.cross_entropy(logits, np.arange(4)).data) == pytest.approx(np.log(7))


def test_straight_through_forwards_hard_and_backwards_soft(double):
    soft = Tensor(np.array([0.2, 0.5, 0.3]), requires_grad=True)
    hard = np.array([0.0, 1.0, 0.0])
    with Tape() as tape:
        y = ops.straight_through(soft, hard)
        out = ops.sum(ops.mul(y, Tensor(np.array([1.0, 2.0, 3.0]))))
    assert np.array_equal(y.data, hard)
    backward(tape, out)
    np.testing.assert_allclose(soft.grad, [1.0, 2.0, 3.0])


def test_fused_cells_match_composed_formulas(double, rng):
    h = 3
    ps = _params(rng, xz=(4, 4 * h), hc=(4, 2 * h), wh=(h, 4 * h), ch=(4, 4 * h), w=(2 * h, 5 * h),
                 b=(5 * h,), gx=(4, 3 * h), gh=(4, h), u=(h, 3 * h))
    mask = np.array([True, False, True, True])
    wl = Tensor(rng.normal(size=(4, 2 * h)))
    wg = Tensor(rng.normal(size=(4, h)))

    def f():
        a = _probe(lstm_step(ps["xz"], ps["hc"], ps["wh"], mask), wl)
        b = _probe(tree_step(ps["ch"], ps["w"], ps["b"]), wl)
        c = _probe(gru_step(ps["gx"], ps["gh"], ps["u"]), wg)
        return ops.add(ops.add(a, b), c)

    assert grad_check(f, ps) < 1e-6

    # masked rows carry the previous state through unchanged
    out = lstm_step(ps["xz"], ps["hc"], ps["wh"], mask)
    np.testing.assert_array_equal(out.data[1], ps["hc"].data[1])

    # gate kernels against direct formulas
    z = ps["xz"].data
    c_prev = ps["hc"].data[:, h:]
    sig = lambda v: 1 / (1 + np.exp(-v))  # noqa: E731
    f_, i_, g_, o_ = sig(z[:, :h]), sig(z[:, h:2 * h]), np.tanh(z[:, 2 * h:3 * h]), sig(z[:, 3 * h:])
    c = f_ * c_prev + i_ * g_
    hc = lstm_gates(Tensor(z), Tensor(c_prev)).data
    np.testing.assert_allclose(hc, np.concatenate([o_ * np.tanh(c), c], axis=1), rtol=1e-12, atol=1e-14)

    z5 = rng.normal(size=(4, 5 * h))
    cl, cr = rng.normal(size=(4, h)), rng.normal(size=(4, h))
    fl, fr, i5, g5, o5 = (sig(z5[:, k * h:(k + 1) * h]) for k in range(5))
    g5 = np.tanh(z5[:, 3 * h:4 * h])
    c5 = fl * cl + fr * cr + i5 * g5
    np.testing.assert_allclose(tree_gates(Tensor(z5), Tensor(cl), Tensor(cr)).data,
                               np.concatenate([o5 * np.tanh(c5), c5], axis=1), rtol=1e-12, atol=1e-14)


def test_gradients_accumulate_over_reuse(double):
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True, name="x")
    with Tape() as tape:
        y = ops.sum(ops.add(ops.mul(x, x), ops.getitem(x, np.array([0, 0]))))
    g = backward(tape, y)
    np.testing.assert_allclose(g["x"], [2 * 1 + 2, 2 * 2])


def test_backward_rejects_non_scalar_and_fills_untouched_params(double):
    ps = ParamSet()
    a = ps.add("a", (2,))
    ps.add("unused", (3,))
    with Tape() as tape:
        y = ops.scale(a, 2.0)
    with pytest.raises(ValueError, match="scalar"):
        backward(tape, y)
    with Tape() as tape:
        s = ops.sum(a)
    g = backward(tape, s, ps)
    assert np.array_equal(g["unused"], np.zeros(3))
    assert np.array_equal(g["a"], np.ones(2))


def test_shape_errors_name_the_operation():
    with pytest.raises(ShapeError, match="matmul"):
        ops.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 5))))
    with pytest.raises(ShapeError, match="add"):
        ops.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4,))))
    with pytest.raises(ShapeError):
        lstm_step(Tensor(np.zeros((2, 8))), Tensor(np.zeros((2, 6))), Tensor(np.zeros((3, 12))))


def test_embedding_bounds_checked():
    with pytest.raises(IndexError):
        ops.embedding(Tensor(np.zeros((3, 2))), np.array([0, 3]))


def test_no_tape_records_nothing():
    x = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        with no_tape():
            ops.sum(ops.mul(x, x))
        assert len(tape) == 0
        ops.sum(x)
        assert len(tape) == 1


def test_max_ties_route_to_lowest_index(double):
    x = Tensor(np.array([[1.0, 3.0, 3.0]]), requires_grad=True)
    with Tape() as tape:
        y = ops.sum(ops.max(x, axis=1))
    backward(tape, y)
    np.testing.assert_array_equal(x.grad, [[0.0, 1.0, 0.0]])


def test_precision_is_thread_local():
    seen = {}

    def worker():
        seen["thread"] = current_precision()

    with precision("double"):
        assert Tensor([1.0]).dtype == np.float64
        t = threading.Thread(target=worker)
        t.start()
        t.join()
    assert seen["thread"] == "single"
    assert Tensor([1.0]).dtype == np.float32


def test_grad_check_requires_double_precision():
    ps = ParamSet()
    ps.add("a", (2,))
    with pytest.raises(RuntimeError):
        grad_check(lambda: ops.sum(ps["a"]), ps)


def test_numeric_gradient_of_quadratic(double):
    x = Tensor(np.array([1.0, -2.0]))
    num = numeric_gradient(lambda: ops.sum(ops.mul(x, x)), x)
    assert num[0] == pytest.approx(2.0) and num[1] == pytest.approx(-4.0)


def test_param_set_names_unique_and_state_round_trip(rng):
    ps = ParamSet()
    ps.add("w", (2, 3), rng=rng)
    with pytest.raises(KeyError):
        ps.add("w", (1,))
    state = ps.state()
    ps["w"].data += 1
    ps.load_state(state)
    np.testing.assert_array_equal(ps["w"].data, state["w"])
    with pytest.raises(KeyError):
        ps.load_state({})
    ps["w"].data[0, 0] = np.nan
    with pytest.raises(FloatingPointError, match="'w'"):
        ps.check_finite()


def test_uniform_init_bound(rng):
    ps = ParamSet()
    w = ps.add("w", (400, 50), rng=rng)
    assert np.abs(w.data).max() <= 1 / np.sqrt(400)
