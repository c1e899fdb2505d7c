"""Task heads: MLP classifier, sentence-pair features and a GRU decoder."""

from dataclasses import dataclass

import numpy as np

from .autodiff import Init, Tensor, gru_step, no_tape, ops
from .vocab import BOS, EOS, PAD


class HeadError(ValueError):
    pass


class Classifier:
    """Two affine layers with a ReLU between them (hidden width 1024 by default).

    Dropout, when enabled, applies to the input and to the hidden layer.
    """

    def __init__(self, params, prefix, in_dim, n_classes, hidden=1024, dropout=0.0, rng=None):
        if n_classes < 2:
            raise HeadError(f"a classifier needs at least 2 classes, got {n_classes}")
        if in_dim <= 0 or hidden <= 0:
            raise HeadError("classifier dimensions must be positive")
        self.in_dim, self.n_classes, self.hidden = in_dim, n_classes, hidden
        self.dropout = dropout
        self.w1 = params.add(f"{prefix}.w1", (in_dim, hidden), Init(), rng)
        self.b1 = params.add(f"{prefix}.b1", (hidden,), Init("zeros"), rng)
        self.w2 = params.add(f"{prefix}.w2", (hidden, n_classes), Init(), rng)
        self.b2 = params.add(f"{prefix}.b2", (n_classes,), Init("zeros"), rng)

    def __call__(self, x, training=False, rng=None):
        return classify(self, x, training, rng)


def classify(p, encoding, training=False, rng=None):
    """Class logits for encodings (B, D) or a single encoding (D,)."""
    if encoding.shape[-1] != p.in_dim:
        raise ops.ShapeError(f"classify: encoding width {encoding.shape[-1]} != {p.in_dim}")
    x = encoding
    drop = p.dropout if training else 0.0
    if drop:
        x = ops.dropout(x, drop, rng)
    hid = ops.relu(ops.add(ops.matmul(x, p.w1), p.b1))
    if drop:
        hid = ops.dropout(hid, drop, rng)
    return ops.add(ops.matmul(hid, p.w2), p.b2)


def relation_features(s1, s2):
    """``[s1; s2; s1 - s2; s1 * s2]`` along the last axis."""
    if s1.shape != s2.shape:
        raise ops.ShapeError(f"relation_features: {s1.shape} vs {s2.shape}")
    return ops.concat([s1, s2, ops.sub(s1, s2), ops.mul(s1, s2)], axis=-1)


@dataclass
class GRUParams:
    """Input weights ``w_x`` (E, 3H), recurrent ``u`` (H, 3H), bias ``b`` (3H,).

    Column blocks are ``[update, reset, candidate]``.
    """

    w_x: Tensor
    u: Tensor
    b: Tensor

    @property
    def hidden(self):
        return self.u.shape[0]


def gru_cell(p, h_prev, x):
    """Reference GRU cell built from primitives; equals :func:`gru_step`."""
    h = p.hidden
    if h_prev.shape[-1] != h or x.shape[-1] != p.w_x.shape[0]:
        raise ops.ShapeError(f"gru_cell: state {h_prev.shape}, input {x.shape}, weights {p.w_x.shape}")
    xz = ops.add(ops.matmul(x, p.w_x), p.b)
    gates = ops.sigmoid(ops.add(ops.getitem(xz, (Ellipsis, slice(0, 2 * h))),
                                ops.matmul(h_prev, ops.getitem(p.u, (slice(None), slice(0, 2 * h))))))
    upd = ops.getitem(gates, (Ellipsis, slice(0, h)))
    rst = ops.getitem(gates, (Ellipsis, slice(h, 2 * h)))
    cand = ops.tanh(ops.add(ops.getitem(xz, (Ellipsis, slice(2 * h, 3 * h))),
                            ops.matmul(ops.mul(rst, h_prev), ops.getitem(p.u, (slice(None), slice(2 * h, 3 * h))))))
    return ops.add(ops.mul(ops.sub(1.0, upd), h_prev), ops.mul(upd, cand))


class Decoder:
    """Left-to-right GRU decoder conditioned on a sentence encoding.

    The GRU width equals the encoding width; the initial state is an affine
    map of the encoding.
    """

    def __init__(self, params, prefix, enc_dim, vocab_size, embed_dim=None, rng=None):
        if vocab_size < 4:
            raise HeadError("target vocabulary must include the special tokens")
        h = enc_dim
        e = embed_dim or enc_dim
        self.vocab_size = vocab_size
        self.embed = params.add(f"{prefix}.embed", (vocab_size, e), Init("uniform", scale=0.5), rng)
        self.w0 = params.add(f"{prefix}.init.w", (enc_dim, h), Init(), rng)
        self.b0 = params.add(f"{prefix}.init.b", (h,), Init("zeros"), rng)
        self.gru = GRUParams(
            params.add(f"{prefix}.gru.w_x", (e, 3 * h), Init(), rng),
            params.add(f"{prefix}.gru.u", (h, 3 * h), Init(), rng),
            params.add(f"{prefix}.gru.b", (3 * h,), Init("zeros"), rng),
        )
        self.w_out = params.add(f"{prefix}.out.w", (h, vocab_size), Init(), rng)
        self.b_out = params.add(f"{prefix}.out.b", (vocab_size,), Init("zeros"), rng)

    def initial_state(self, encoding):
        return ops.add(ops.matmul(encoding, self.w0), self.b0)

    def teacher_forced(self, encoding, targets):
        """Per-step logits and the mean token NLL for padded ``targets``.

        ``targets`` (B, L) starts with BOS and ends with EOS before padding;
        step t reads gold token t and predicts token t + 1.
        """
        targets = np.asarray(targets)
        if targets.ndim != 2 or targets.shape[1] < 2:
            raise HeadError("targets need at least BOS and EOS")
        if (targets[:, 0] != BOS).any():
            raise HeadError("targets must start with BOS")
        inputs, gold = targets[:, :-1], targets[:, 1:]
        steps = inputs.shape[1]
        xz = ops.add(ops.matmul(ops.embedding(self.embed, inputs), self.gru.w_x), self.gru.b)
        h = self.initial_state(encoding)
        hs = []
        for t in range(steps):
            h = gru_step(ops.getitem(xz, (slice(None), t)), h, self.gru.u)
            hs.append(h)
        logits = ops.add(ops.matmul(ops.stack(hs, axis=1), self.w_out), self.b_out)
        loss = ops.cross_entropy(logits, gold, gold != PAD)
        return logits, loss

    def greedy(self, encoding, max_len):
        """Argmax decoding; each sequence stops at EOS (excluded) or ``max_len``."""
        if max_len < 1:
            raise HeadError("max_len must be at least 1")
        with no_tape():
            h = self.initial_state(encoding)
            b_size = h.shape[0]
            tok = np.full(b_size, BOS)
            out = np.full((b_size, max_len), PAD)
            alive = np.ones(b_size, dtype=bool)
            for t in range(max_len):
                xz = self.embed.data[tok] @ self.gru.w_x.data + self.gru.b.data
                h = gru_step(Tensor._result(xz, False), h, self.gru.u)
                logits = h.data @ self.w_out.data + self.b_out.data
                tok = logits.argmax(axis=1)
                alive &= tok != EOS
                if not alive.any():
                    break
                out[alive, t] = tok[alive]
        return [[int(x) for x in row if x != PAD] for row in out]
