"""Max, mean and self-attentive pooling over encoder states."""

import numpy as np

from .autodiff import Init, ops

POOLINGS = ("none", "max", "mean", "self-attention")


class PoolingError(ValueError):
    pass


def _as_batch(states):
    if states.ndim != 2:
        raise PoolingError(f"expected a state matrix (m, d), got shape {states.shape}")
    if states.shape[0] < 1:
        raise PoolingError("cannot pool an empty state matrix")
    return ops.reshape(states, (1,) + states.shape), np.ones((1, states.shape[0]), dtype=bool)


def max_pool(states, mask=None):
    """Per-dimension maximum over the states (rows).

    ``states`` is (m, d), or (B, M, d) with a (B, M) ``mask``.  Ties route
    the gradient to the lowest row.
    """
    if mask is None:
        x, mask = _as_batch(states)
        return ops.reshape(ops.masked_max(x, mask), (states.shape[1],))
    return ops.masked_max(states, mask)


def mean_pool(states, mask=None):
    if mask is None:
        x, mask = _as_batch(states)
        return ops.reshape(ops.masked_mean(x, mask), (states.shape[1],))
    return ops.masked_mean(states, mask)


class AttentionPooling:
    """``a = softmax(w_beta^T tanh(W_alpha H))``, ``s = H a^T``.

    ``W_alpha`` is stored transposed, (d, k), to act on row states.
    """

    def __init__(self, params, prefix, state_dim, attention_dim=128, rng=None):
        self.w_alpha = params.add(f"{prefix}.w_alpha", (state_dim, attention_dim), Init(), rng)
        self.w_beta = params.add(f"{prefix}.w_beta", (attention_dim,), Init(), rng)

    def __call__(self, states, mask=None):
        return self_attention(self, states, mask)


def self_attention(p, states, mask=None):
    """Returns ``(s, a)``; batched when ``mask`` is given."""
    single = mask is None
    if single:
        states, mask = _as_batch(states)
    if states.shape[-1] != p.w_alpha.shape[0]:
        raise ops.ShapeError(f"self_attention: states {states.shape} do not fit W_alpha {p.w_alpha.shape}")
    b, m, d = states.shape
    k = p.w_alpha.shape[1]
    proj = ops.tanh(ops.matmul(states, p.w_alpha))
    scores = ops.reshape(ops.matmul(proj, ops.reshape(p.w_beta, (k, 1))), (b, m))
    a = ops.masked_softmax(scores, mask)
    s = ops.sum(ops.mul(ops.reshape(a, (b, m, 1)), states), axis=1)
    if single:
        return ops.reshape(s, (d,)), ops.reshape(a, (m,))
    return s, a


def pool_states(kind, states, mask, attention=None):
    """Apply pooling ``kind`` to batched states; returns ``(s, attention weights or None)``."""
    if kind == "max":
        return max_pool(states, mask), None
    if kind == "mean":
        return mean_pool(states, mask), None
    if kind == "self-attention":
        if attention is None:
            raise PoolingError("self-attention pooling needs attention parameters")
        return self_attention(attention, states, mask)
    raise PoolingError(f"unknown pooling {kind!r}")


def pool_input_size(n, is_tree):
    """Number of states pooled for an n-word sentence."""
    if n < 1:
        raise PoolingError("sentences have at least one word")
    return 2 * n - 1 if is_tree else n


__all__ = ["AttentionPooling", "POOLINGS", "max_pool", "mean_pool", "pool_input_size",
           "pool_states", "self_attention"]
