"""Acceptance criteria, one test each.

Every test records a PASS/FAIL line (see ``conftest.py``) before asserting,
so the terminal summary lists all criteria even when some fail.  The
training-based criteria (7, 8, 11) carry the ``slow`` marker.
"""

import math
import time

import numpy as np
import pytest

from treesent.autodiff import ParamSet, Tensor, grad_check, no_tape, ops, precision
from treesent.encoders import Encoder, EncoderConfig, add_lstm_params, add_tree_params, lstm_cell, tree_lstm_cell
from treesent.harness import (
    HeadConfig,
    TrainConfig,
    bleu,
    evaluate,
    length_bucket,
    load_checkpoint,
    modified_precision,
    rho_sweep,
    save_checkpoint,
    synth_generate,
    train,
)
from treesent.heads import Classifier, Decoder, GRUParams, gru_cell
from treesent.pooling import AttentionPooling, mean_pool, pool_input_size, pool_states
from treesent.saliency import (
    corpus_saliency,
    jacobian_l1,
    positional_saliency_summary,
    saliency_agreement,
    word_saliency,
)
from treesent.trees import (
    build_balanced,
    build_left,
    build_random,
    build_right,
    depth_stats,
    mean_leaf_depth_mc,
)
from treesent.vocab import BOS, EOS, PAD, Vocab

N_SEEDS = 10
VOCAB = 12


def _probe(out, weights):
    # 0.01 keeps finite-difference rounding noise below the relative floor
    return ops.scale(ops.sum(ops.mul(out, weights)), 0.01)


def _filled(ps, name, shape, rng):
    ps.add(name, shape, rng=rng)
    ps[name].data[...] = rng.normal(size=shape)
    return ps[name]


def _cell_checks(rng):
    """name -> scalar builder and the ParamSet it depends on."""
    out = {}
    ps = ParamSet()
    p = add_lstm_params(ps, "l", 5, 4, rng)
    p.b.data[...] = rng.normal(size=p.b.shape)
    h, c, x = (_filled(ps, k, (3, d), rng) for k, d in (("h", 4), ("c", 4), ("x", 5)))
    w = rng.normal(size=(3, 8))
    out["cell lstm"] = (lambda: _probe(ops.concat(lstm_cell(p, h, c, x), axis=-1), w), ps)

    ps = ParamSet()
    p2 = add_tree_params(ps, "t", 4, rng)
    p2.b.data[...] = rng.normal(size=p2.b.shape)
    kids = [_filled(ps, k, (3, 4), rng) for k in ("hl", "cl", "hr", "cr")]
    out["cell tree"] = (lambda: _probe(ops.concat(tree_lstm_cell(p2, kids[:2], kids[2:]), axis=-1), w), ps)

    ps = ParamSet()
    g = GRUParams(_filled(ps, "w_x", (5, 12), rng), _filled(ps, "u", (4, 12), rng), _filled(ps, "b", (12,), rng))
    gh, gx = _filled(ps, "h", (3, 4), rng), _filled(ps, "x", (3, 5), rng)
    w4 = rng.normal(size=(3, 4))
    out["cell gru"] = (lambda: _probe(gru_cell(g, gh, gx), w4), ps)
    return out


def _pool_checks(rng):
    out = {}
    mask = np.array([[True] * 5, [True, True, True, False, False]])
    for kind in ("max", "mean", "self-attention"):
        ps = ParamSet()
        att = AttentionPooling(ps, "a", 4, 3, rng)
        states = _filled(ps, "h", (2, 5, 4), rng)
        w = rng.normal(size=(2, 4))
        out[f"pool {kind}"] = (lambda k=kind, a=att, s=states, w=w: _probe(pool_states(k, s, mask, a)[0], w), ps)
    return out


def _head_checks(rng):
    out = {}
    ps = ParamSet()
    clf = Classifier(ps, "c", 6, 3, hidden=8, rng=rng)
    x = _filled(ps, "x", (4, 6), rng)
    # finite differences are only meaningful away from the ReLU kink
    while np.abs(x.data @ clf.w1.data + clf.b1.data).min() < 1e-3:
        x.data[...] = rng.normal(size=x.shape)
    labels = rng.integers(0, 3, 4)
    out["head classifier"] = (lambda: ops.scale(ops.cross_entropy(clf(x), labels), 0.01), ps)
    ps = ParamSet()
    dec = Decoder(ps, "d", 5, 7, embed_dim=4, rng=rng)
    enc = _filled(ps, "enc", (2, 5), rng)
    targets = np.array([[BOS, 4, 6, 5, EOS], [BOS, 5, EOS, PAD, PAD]])
    out["head decoder"] = (lambda: ops.scale(dec.teacher_forced(enc, targets)[1], 0.01), ps)
    return out


def encoder_configs():
    """Every layout, with both leaf modes for trees, plus each pooling."""
    configs = []
    for layout in ("balanced", "left", "right", "random", "parsed", "gumbel"):
        for leaf in ("none", "bidirectional"):
            configs.append(dict(layout=layout, leaf_rnn=leaf))
    configs += [dict(layout="linear"), dict(layout="linear-bidirectional")]
    for pooling in ("max", "mean", "self-attention"):
        configs += [dict(layout="balanced", pooling=pooling), dict(layout="linear-bidirectional", pooling=pooling)]
    return configs


def _encoder(rng, **kw):
    cfg = EncoderConfig(embed_dim=5, hidden_dim=4, leaf_rnn_dim=3, attention_dim=3, vocab_size=VOCAB, **kw)
    return Encoder(cfg, rng=rng)


def _encoder_check(kw, rng):
    enc = _encoder(rng, **kw)
    lengths = np.array([5, 3, 1])
    ids = np.zeros((3, 5), dtype=np.int64)
    for b, n in enumerate(lengths):
        ids[b, :n] = rng.integers(4, VOCAB, n)
    lays = [build_random(int(n), 0.5, rng) for n in lengths]
    given = lays if kw["layout"] in ("parsed", "random") else None
    w = rng.normal(size=(3, enc.config.output_dim))
    # gumbel is checked in evaluation mode, where the selection is a fixed argmax
    f = lambda: _probe(enc.encode(ids, lengths, layouts=given).encoding, w)
    return f, enc.params


def test_criterion_01_gradient_oracle(criterion):
    start = time.perf_counter()
    worst = {}
    with precision("double"):
        for seed in range(N_SEEDS):
            rng = np.random.default_rng(seed)
            checks = {**_cell_checks(rng), **_pool_checks(rng), **_head_checks(rng)}
            for kw in encoder_configs():
                name = "encoder " + ",".join(f"{k}={v}" for k, v in kw.items())
                checks[name] = _encoder_check(kw, rng)
            for name, (f, ps) in checks.items():
                err = grad_check(f, ps, max_coords=6, rng=rng)
                worst[name] = max(worst.get(name, 0.0), err)
    elapsed = time.perf_counter() - start
    name, err = max(worst.items(), key=lambda kv: kv[1])
    ok = err < 1e-4 and elapsed < 120
    criterion(1, ok, f"{len(worst)} functions x {N_SEEDS} seeds, worst {err:.2e} ({name}), {elapsed:.1f}s")
    assert ok


def test_criterion_02_layout_invariants(criterion):
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    bad = []
    for n in range(1, 1025):
        bal, left, right = build_balanced(n), build_left(n), build_right(n)
        for lay in (bal, left, right, build_random(n, 0.5, rng)):
            lay.validate()
        if depth_stats(bal).max_depth != math.ceil(math.log2(n)):
            bad.append(("depth", n))
        if build_random(n, 0.0, rng) != left or build_random(n, 1.0, rng) != bal:
            bad.append(("degenerate", n))
    elapsed = time.perf_counter() - start
    ok = not bad and elapsed < 30
    criterion(2, ok, f"n=1..1024, {len(bad)} violations, {elapsed:.1f}s")
    assert ok


def test_criterion_03_depth_monotone(criterion):
    start = time.perf_counter()
    grid = [0.0, 0.25, 0.5, 0.75, 1.0]
    depths = [mean_leaf_depth_mc(32, rho, 1000, seed=0) for rho in grid]
    elapsed = time.perf_counter() - start
    ok = all(a > b for a, b in zip(depths, depths[1:])) and elapsed < 10
    criterion(3, ok, "mean leaf depth " + " > ".join(f"{d:.3f}" for d in depths) + f", {elapsed:.1f}s")
    assert ok


def test_criterion_04_span_locality(criterion):
    start = time.perf_counter()
    leaks = checked = 0
    eps = 1e-3
    with precision("double"), no_tape():
        for layout in ("balanced", "left", "right", "random", "parsed", "gumbel"):
            for n in range(1, 9):
                rng = np.random.default_rng(n)
                enc = _encoder(rng, layout=layout)
                ids = rng.integers(4, VOCAB, (1, n))
                lay = [build_random(n, 0.5, rng)] if layout in ("random", "parsed") else None
                base = enc.embedding.data[ids].copy()

                def states(emb):
                    out = enc.encode(ids, [n], layouts=lay, states=True, embedded=Tensor(emb))
                    return out.states.data[0], out.layouts[0]

                ref, tree = states(base)
                spans = [(j, j) for j in range(n)] + list(zip(tree.lo, tree.hi))
                for j in range(n):
                    for d in range(base.shape[-1]):
                        hi, lo = base.copy(), base.copy()
                        hi[0, j, d] += eps
                        lo[0, j, d] -= eps
                        (s_hi, t_hi), (s_lo, t_lo) = states(hi), states(lo)
                        if t_hi != tree or t_lo != tree:
                            continue  # a gumbel merge flipped; the layout itself changed
                        jac = (s_hi - s_lo) / (2 * eps)
                        for m, (a, b) in enumerate(spans):
                            if not a <= j <= b:
                                checked += 1
                                leaks += bool(np.any(jac[m] != 0.0))
    elapsed = time.perf_counter() - start
    ok = leaks == 0 and checked > 0 and elapsed < 60
    criterion(4, ok, f"{checked} (node, word, dim) out-of-span entries, {leaks} nonzero, {elapsed:.1f}s")
    assert ok


def _fd_saliency(enc, ids, n, layout, eps=1e-6):
    base = enc.embedding.data[ids][None].copy()
    out = np.zeros(n)
    with no_tape():
        for k in range(n):
            for j in range(base.shape[2]):
                hi, lo = base.copy(), base.copy()
                hi[0, k, j] += eps
                lo[0, k, j] -= eps
                f = [enc.encode(ids[None], [n], layouts=layout, embedded=Tensor(e)).encoding.data for e in (hi, lo)]
                out[k] += np.abs((f[0] - f[1]) / (2 * eps)).sum()
    return out


def test_criterion_05_saliency_oracle(criterion):
    start = time.perf_counter()
    worst, pad_max = 0.0, 0.0
    vocab = Vocab([f"w{i}" for i in range(VOCAB - 4)])
    with precision("double"):
        for seed, kw in enumerate(encoder_configs()):
            rng = np.random.default_rng(seed)
            enc = _encoder(rng, **kw)
            n = int(rng.integers(2, 8))
            # distinct words: repeated ones tie under max pooling, where the oracle is undefined
            tokens = [f"w{i}" for i in rng.choice(VOCAB - 4, n, replace=False)]
            layout = build_random(n, 0.5, rng) if kw["layout"] == "parsed" else None
            prof = word_saliency(enc, tokens, vocab, layout=layout)
            ref = _fd_saliency(enc, np.array(vocab.encode(tokens)), n, None if layout is None else [layout])
            worst = max(worst, float(np.max(np.abs(prof.scores - ref) / np.maximum(np.abs(ref), 1e-12))))
            lays = None if layout is None else [layout, build_left(2)]
            padded = corpus_saliency(enc, [tokens, tokens[:2]], vocab, layouts=lays)
            ids = np.zeros((2, n), dtype=np.int64)
            ids[0] = vocab.encode(tokens)
            ids[1, :2] = vocab.encode(tokens[:2])
            scores, _ = jacobian_l1(enc, ids, [n, 2], lays)
            pad_max = max(pad_max, float(np.abs(scores[1, 2:]).max(initial=0.0)))
            np.testing.assert_allclose(padded[1].scores, scores[1, :2])
    elapsed = time.perf_counter() - start
    ok = worst < 1e-3 and pad_max == 0.0 and elapsed < 60
    criterion(5, ok, f"{len(encoder_configs())} configs, worst relative gap {worst:.2e}, "
                     f"max pad saliency {pad_max}, {elapsed:.1f}s")
    assert ok


def test_criterion_06_agreement_protocol(criterion):
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    vocab = Vocab([f"w{i}" for i in range(VOCAB - 4)])
    enc = _encoder(rng, layout="balanced", leaf_rnn="bidirectional")
    twin = _encoder(np.random.default_rng(99), layout="balanced", leaf_rnn="bidirectional")
    twin.params.load_state(enc.params.state())
    sents = [[f"w{i}" for i in rng.integers(0, VOCAB - 4, int(n))] for n in rng.integers(2, 16, 50)]
    same = saliency_agreement([corpus_saliency(enc, sents, vocab), corpus_saliency(twin, sents, vocab)])
    stub = np.random.default_rng(1)
    null = saliency_agreement([[stub.random(32) for _ in range(1000)] for _ in range(2)])
    elapsed = time.perf_counter() - start
    ok = same.mean == 100.0 and abs(null.mean) < 5 and elapsed < 60
    criterion(6, ok, f"duplicated models {same.mean!r}, random stubs {null.mean:.3f}, {elapsed:.1f}s")
    assert ok


@pytest.mark.slow
def test_criterion_07_positional_saliency_trend(criterion):
    start = time.perf_counter()
    ds = synth_generate("copy", 50, 16, 24, (20000, 100, 200), seed=0)
    sents = [ex.tokens for ex in ds.test]
    hits, rows = 0, []
    for seed in range(5):
        q, score = {}, {}
        for layout in ("right", "left"):
            cfg = EncoderConfig(layout=layout, leaf_rnn="bidirectional", embed_dim=16, leaf_rnn_dim=16,
                                vocab_size=len(ds.vocab))
            res = train(ds, cfg, HeadConfig(), TrainConfig(epochs=10, seed=seed))
            q[layout] = positional_saliency_summary(corpus_saliency(res.model.encoder, sents, ds.vocab))
            score[layout] = evaluate(res.model, ds.test)
        hit = q["right"][0] > q["right"][3] and q["right"][0] > q["left"][0]
        hits += hit
        rows.append(f"seed {seed}: right q1 {q['right'][0]:.3f} q4 {q['right'][3]:.3f} bleu {score['right']:.1f}, "
                    f"left q1 {q['left'][0]:.3f} q4 {q['left'][3]:.3f} bleu {score['left']:.1f}")
    elapsed = time.perf_counter() - start
    ok = hits >= 4 and elapsed < 1800
    criterion(7, ok, f"{hits}/5 seeds hold, {elapsed:.0f}s; " + "; ".join(rows))
    assert ok


@pytest.mark.slow
def test_criterion_08_rho_sweep_trend(criterion):
    start = time.perf_counter()
    ds = synth_generate("copy", 20, 12, 20, (10000, 200, 300), seed=0)
    cfg = EncoderConfig(layout="random", embed_dim=128, hidden_dim=128, vocab_size=len(ds.vocab))
    rows = rho_sweep(ds, cfg, [0.0, 0.5, 1.0], HeadConfig(), TrainConfig(epochs=10), seeds=range(5))
    med = [r["median_metric"] for r in rows]
    elapsed = time.perf_counter() - start
    ok = med[2] >= med[0] and min(med[0], med[2]) - 1 <= med[1] <= max(med[0], med[2]) + 1 and elapsed < 2700
    criterion(8, ok, "median BLEU at rho 0/0.5/1: " + "/".join(f"{m:.2f}" for m in med) + f", {elapsed:.0f}s")
    assert ok


def test_criterion_09_pooling_identities(criterion):
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    ps = ParamSet()
    att = AttentionPooling(ps, "a", 6, 4, rng)
    for t in ps.tensors():
        t.data[...] = 0
    mean_exact = True
    for m in range(1, 40):
        x = Tensor(rng.normal(size=(m, 6)))
        mean_exact &= np.array_equal(att(x)[0].data, mean_pool(x).data)
    with precision("double"):
        att2 = AttentionPooling(ParamSet(), "b", 6, 4, rng)
        x = Tensor(rng.normal(size=(8, 30, 6)) * 5)
        mask = np.arange(30)[None, :] < rng.integers(1, 31, 8)[:, None]
        _, a = att2(x, mask)
        sum_err = float(np.abs(a.data.sum(axis=1) - 1).max())
    counts_ok = True
    for layout in ("balanced", "right", "gumbel"):
        enc = _encoder(rng, layout=layout, pooling="mean")
        lengths = np.array([1, 4, 7])
        ids = rng.integers(4, VOCAB, (3, 7))
        out = enc.encode(ids, lengths)
        counts_ok &= bool((out.mask.sum(axis=1) == [pool_input_size(int(n), True) for n in lengths]).all())
        counts_ok &= bool((out.mask.sum(axis=1) == 2 * lengths - 1).all())
    elapsed = time.perf_counter() - start
    ok = mean_exact and sum_err < 1e-12 and counts_ok and elapsed < 10
    criterion(9, ok, f"zero attention == mean: {mean_exact}, weight-sum error {sum_err:.1e}, "
                     f"2n-1 states: {counts_ok}, {elapsed:.1f}s")
    assert ok


def test_criterion_10_metrics(criterion):
    start = time.perf_counter()
    refs = ["the cat sat on the mat", "a quick brown fox jumps", "one two three four"]
    identical = bleu(refs, refs)
    m, t = modified_precision("the the the", "the cat sat", 1)
    buckets = {n: length_bucket(n) for n in (8, 9, 12, 13)}
    elapsed = time.perf_counter() - start
    ok = identical == 100.0 and m / t == 1 / 3 and buckets == {8: 1, 9: 2, 12: 2, 13: 3} and elapsed < 5
    criterion(10, ok, f"identical BLEU {identical}, clipped precision {m}/{t}, buckets {buckets}")
    assert ok


@pytest.mark.slow
def test_criterion_11_end_to_end(criterion, tmp_path):
    start = time.perf_counter()
    ds = synth_generate("first-token-class", 20, 4, 12, (5000, 300, 300), seed=0, n_classes=4)
    tree_rng = np.random.default_rng(5)
    for ex in ds.train + ds.dev + ds.test:
        ex.tree = build_random(len(ex.tokens), 0.5, tree_rng)  # stands in for parser output
    kinds = ["balanced", "left", "right", "random", "parsed", "gumbel", "linear", "linear-bidirectional"]
    results, round_trip = {}, True
    for kind in kinds:
        leaf = "bidirectional" if kind in ("balanced", "gumbel") else "none"
        cfg = EncoderConfig(layout=kind, leaf_rnn=leaf, embed_dim=32, hidden_dim=32, leaf_rnn_dim=16,
                            vocab_size=len(ds.vocab))
        res = train(ds, cfg, HeadConfig(), TrainConfig(epochs=5, seed=0))
        results[kind] = max(row["dev_metric"] for row in res.history)
        path = tmp_path / f"{kind}.ckpt"
        save_checkpoint(path, res.model, TrainConfig(epochs=5), res.optimizer)
        loaded, _, _ = load_checkpoint(path)
        round_trip &= evaluate(loaded, ds.test) == evaluate(res.model, ds.test)
    elapsed = time.perf_counter() - start
    ok = min(results.values()) > 0.95 and round_trip and elapsed < 900
    detail = ", ".join(f"{k} {v:.3f}" for k, v in results.items())
    criterion(11, ok, f"best dev accuracy {detail}; checkpoint round trip exact: {round_trip}, {elapsed:.0f}s")
    assert ok
