"""Differentiable primitives.

Each primitive computes its output with numpy and hands ``make_result`` a
rule mapping the output adjoint to one adjoint per input (``None`` when an
input needs none).
"""

import numpy as np

from .tensor import Scatter, Tensor, as_tensor, make_result


class ShapeError(ValueError):
    pass


def _shape_error(op, *shapes):
    joined = " and ".join(str(tuple(s)) for s in shapes)
    return ShapeError(f"{op}: incompatible shapes {joined}")


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    ndiff = g.ndim - len(shape)
    if ndiff > 0:
        g = g.sum(axis=tuple(range(ndiff)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _broadcast_check(op, a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise _shape_error(op, a.shape, b.shape) from None


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("add", a, b)
    sa, sb = a.shape, b.shape
    return make_result(a.data + b.data, (a, b),
                       lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("sub", a, b)
    sa, sb = a.shape, b.shape
    return make_result(a.data - b.data, (a, b),
                       lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("mul", a, b)
    ad, bd = a.data, b.data

    def rule(g):
        ga = _unbroadcast(g * bd, ad.shape) if a.requires_grad else None
        gb = _unbroadcast(g * ad, bd.shape) if b.requires_grad else None
        return ga, gb

    return make_result(ad * bd, (a, b), rule)


def neg(a):
    return make_result(-a.data, (a,), lambda g: (-g,))


def scale(a, factor):
    """Multiply by a Python scalar constant."""
    return make_result(a.data * factor, (a,), lambda g: (g * factor,))


def matmul(a, b):
    """``a @ b`` for ``a`` of shape (..., k) and a 2-D ``b`` of shape (k, n)."""
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim != 2 or a.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise _shape_error("matmul", a.shape, b.shape)
    ad, bd = a.data, b.data

    def rule(g):
        ga = g @ bd.T if a.requires_grad else None
        gb = None
        if b.requires_grad:
            gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return make_result(ad @ bd, (a, b), rule)


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise _shape_error("concat", *(t.shape for t in tensors)) from None
    ax = axis % data.ndim
    sizes = np.cumsum([t.shape[ax] for t in tensors])[:-1]

    def rule(g):
        return np.split(g, sizes, axis=ax)

    return make_result(data, tuple(tensors), rule)


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    try:
        data = np.stack([t.data for t in tensors], axis=axis)
    except ValueError:
        raise _shape_error("stack", *(t.shape for t in tensors)) from None
    ax = axis % data.ndim

    def rule(g):
        return [np.take(g, i, axis=ax) for i in range(len(tensors))]

    return make_result(data, tuple(tensors), rule)


def _is_basic_index(index):
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (int, np.integer, slice)) or i is Ellipsis or i is None for i in items)


def getitem(x, index):
    """Slice or fancy-index ``x``; the adjoint scatters back into place."""
    data = x.data[index]
    basic = _is_basic_index(index)
    if basic:
        data = data.copy()
    return make_result(data, (x,), lambda g: (Scatter(index, g, accumulate_at=not basic),))


def reshape(x, shape):
    src = x.shape
    try:
        data = x.data.reshape(shape)
    except ValueError:
        raise _shape_error("reshape", src, shape) from None
    return make_result(data, (x,), lambda g: (g.reshape(src),))


def transpose(x, axes=None):
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    inverse = np.argsort(axes)
    return make_result(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inverse),))


def _sigmoid(z):
    # exp(-|z|) never overflows; split by sign.
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(z.dtype, copy=False)


def sigmoid(x):
    y = _sigmoid(x.data)
    return make_result(y, (x,), lambda g: (g * y * (1.0 - y),))


def tanh(x):
    y = np.tanh(x.data)
    return make_result(y, (x,), lambda g: (g * (1.0 - y * y),))


def relu(x):
    mask = x.data > 0
    return make_result(np.where(mask, x.data, 0).astype(x.dtype, copy=False), (x,),
                       lambda g: (g * mask,))


def exp(x):
    y = np.exp(x.data)
    return make_result(y, (x,), lambda g: (g * y,))


def log(x):
    xd = x.data
    return make_result(np.log(xd), (x,), lambda g: (g / xd,))


def _softmax(z, axis):
    shifted = z - z.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def softmax(x, axis=-1):
    y = _softmax(x.data, axis)

    def rule(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return make_result(y, (x,), rule)


def log_softmax(x, axis=-1):
    z = x.data
    shifted = z - z.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    y = shifted - lse

    def rule(g):
        return (g - np.exp(y) * g.sum(axis=axis, keepdims=True),)

    return make_result(y, (x,), rule)


def embedding(table, ids):
    """Gather rows of ``table`` for an integer array ``ids`` of any shape."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"embedding: id out of range for table of {table.shape[0]} rows")
    return make_result(table.data[ids], (table,),
                       lambda g: (Scatter(ids.reshape(-1), g.reshape(-1, g.shape[-1]), True),))


def sum(x, axis=None, keepdims=False):  # noqa: A001
    shape = x.shape

    def rule(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return make_result(np.asarray(x.data.sum(axis=axis, keepdims=keepdims)), (x,), rule)


def mean(x, axis=None, keepdims=False):
    count = x.data.size if axis is None else x.shape[axis]
    return scale(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def max(x, axis=-1, keepdims=False):  # noqa: A001
    """Max along one axis; ties send the adjoint to the lowest index."""
    ax = axis % x.ndim
    arg = np.expand_dims(x.data.argmax(axis=ax), ax)
    data = np.take_along_axis(x.data, arg, axis=ax)
    if not keepdims:
        data = np.squeeze(data, ax)
    shape = x.shape

    def rule(g):
        if not keepdims:
            g = np.expand_dims(g, ax)
        out = np.zeros(shape, dtype=g.dtype)
        np.put_along_axis(out, arg, g, axis=ax)
        return (out,)

    return make_result(data, (x,), rule)


def where(mask, a, b):
    """Select ``a`` where the constant boolean ``mask`` holds, else ``b``."""
    a, b = as_tensor(a), as_tensor(b)
    mask = np.asarray(mask, dtype=bool)
    data = np.where(mask, a.data, b.data)

    def rule(g):
        ga = _unbroadcast(np.where(mask, g, 0), a.shape) if a.requires_grad else None
        gb = _unbroadcast(np.where(mask, 0, g), b.shape) if b.requires_grad else None
        return ga, gb

    return make_result(data, (a, b), rule)


def stop_gradient(x):
    return Tensor._result(x.data, False)


def gather_rows(sources, src, rows, unique=False):
    """Build a matrix whose row ``k`` is ``sources[src[k]][rows[k]]``.

    All sources are 2-D with a common width.  ``src[k] == -1`` yields a
    zero row.  The adjoint scatter-adds into each source; ``unique=True``
    promises no source row is picked twice, which allows a faster scatter.
    """
    src = np.asarray(src)
    rows = np.asarray(rows)
    width = sources[0].shape[1]
    for s in sources:
        if s.ndim != 2 or s.shape[1] != width:
            raise _shape_error("gather_rows", *(t.shape for t in sources))
    out = np.zeros((len(src), width), dtype=sources[0].dtype)
    picks = []
    for j, s in enumerate(sources):
        sel = np.nonzero(src == j)[0]
        if len(sel):
            out[sel] = s.data[rows[sel]]
        picks.append(sel)

    def rule(g):
        res = []
        for s, sel in zip(sources, picks):
            if not s.requires_grad or not len(sel):
                res.append(None)
            else:
                res.append(Scatter(rows[sel], g[sel], not unique))
        return res

    return make_result(out, tuple(sources), rule)


def dropout(x, rate, rng):
    """Inverted dropout with a mask drawn from ``rng``; identity at rate 0."""
    if rate <= 0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return make_result(x.data * keep, (x,), lambda g: (g * keep,))


def cross_entropy(logits, targets, mask=None):
    """Mean negative log-likelihood of integer ``targets`` under ``logits``.

    ``logits`` is (..., C); ``targets`` has the leading shape.  With a
    boolean ``mask`` only masked-in positions count toward the mean.
    """
    z = logits.data
    c = z.shape[-1]
    flat = z.reshape(-1, c)
    t = np.asarray(targets).reshape(-1)
    if len(t) != len(flat):
        raise _shape_error("cross_entropy", logits.shape, np.shape(targets))
    m = np.ones(len(t), dtype=bool) if mask is None else np.asarray(mask, dtype=bool).reshape(-1)
    count = int(m.sum())
    if count == 0:
        raise ValueError("cross_entropy: no positions selected")
    shifted = flat - flat.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    s = e.sum(axis=1, keepdims=True)
    logp = shifted - np.log(s)
    idx = np.arange(len(t))
    nll = -logp[idx, t]
    loss = np.asarray((nll * m).sum() / count, dtype=z.dtype)

    def rule(g):
        p = e / s
        p[idx, t] -= 1.0
        p *= (m[:, None] * (g / count)).astype(p.dtype)
        return (p.reshape(z.shape),)

    return make_result(loss, (logits,), rule)


def masked_max(x, mask):
    """Max over axis 1 of ``x`` (B, M, D) restricted to ``mask`` (B, M)."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any(axis=1).all():
        raise ValueError("masked_max: every row needs at least one state")
    filled = np.where(mask[:, :, None], x.data, -np.inf)
    arg = filled.argmax(axis=1)[:, None, :]
    data = np.take_along_axis(x.data, arg, axis=1)[:, 0, :]
    shape = x.shape

    def rule(g):
        out = np.zeros(shape, dtype=g.dtype)
        np.put_along_axis(out, arg, g[:, None, :], axis=1)
        return (out,)

    return make_result(data, (x,), rule)


def masked_mean(x, mask):
    mask = np.asarray(mask, dtype=bool)
    counts = mask.sum(axis=1)
    if (counts == 0).any():
        raise ValueError("masked_mean: every row needs at least one state")
    w = (mask / counts[:, None]).astype(x.dtype)[:, :, None]
    return make_result((x.data * w).sum(axis=1), (x,), lambda g: (g[:, None, :] * w,))


def masked_softmax(x, mask):
    """Softmax over the last axis with masked-out entries given zero weight."""
    mask = np.asarray(mask, dtype=bool)
    z = np.where(mask, x.data, -np.inf)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.where(mask, np.exp(shifted), 0)
    y = (e / e.sum(axis=-1, keepdims=True)).astype(x.dtype, copy=False)

    def rule(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return make_result(y, (x,), rule)


def cumsum(x, axis=-1):
    ax = axis % x.ndim

    def rule(g):
        return (np.flip(np.cumsum(np.flip(g, ax), axis=ax), ax),)

    return make_result(np.cumsum(x.data, axis=ax), (x,), rule)


def straight_through(soft, hard):
    """Value of the constant ``hard``, adjoint passed unchanged to ``soft``."""
    hard = np.asarray(hard, dtype=soft.dtype)
    if hard.shape != soft.shape:
        raise _shape_error("straight_through", soft.shape, hard.shape)
    return make_result(hard.copy(), (soft,), lambda g: (g,))
