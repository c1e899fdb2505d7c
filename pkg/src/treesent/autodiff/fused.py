"""Recurrent-cell operations recorded as single tape nodes.

``lstm_gates`` / ``tree_gates`` cover just the gate nonlinearities;
``lstm_step``, ``tree_step`` and ``gru_step`` additionally fold in the
recurrent matrix product so an encoder step costs one tape entry.
"""

import numpy as np

from .. import kernels
from .ops import _shape_error, _sigmoid
from .tensor import make_result


def _c(a):
    return np.ascontiguousarray(a)


def lstm_gates(z, c_prev):
    """``[h, c]`` from gate pre-activations ``z`` (N, 4H) and ``c_prev`` (N, H).

    Gate blocks are ``[f, i, c~, o]``: ``c = f*c_prev + i*c~``, ``h = o*tanh(c)``.
    """
    n, width = z.shape
    if c_prev.shape[0] != n or width != 4 * c_prev.shape[1]:
        raise _shape_error("lstm_gates", z.shape, c_prev.shape)
    zd, cd = _c(z.data), _c(c_prev.data)
    hc, acts, tanh_c = kernels.lstm_forward(zd, cd)

    def rule(g):
        return kernels.lstm_backward(acts, cd, tanh_c, _c(g))

    return make_result(hc, (z, c_prev), rule)


def tree_gates(z, c_left, c_right):
    """``[h, c]`` for a binary tree cell; gate blocks ``[f_l, f_r, i, c~, o]``.

    ``c = f_l*c_l + f_r*c_r + i*c~`` and ``h = o*tanh(c)``.
    """
    n, width = z.shape
    if c_left.shape != c_right.shape or c_left.shape[0] != n or width != 5 * c_left.shape[1]:
        raise _shape_error("tree_gates", z.shape, c_left.shape, c_right.shape)
    zd, cl, cr = _c(z.data), _c(c_left.data), _c(c_right.data)
    hc, acts, tanh_c = kernels.tree_forward(zd, cl, cr)

    def rule(g):
        return kernels.tree_backward(acts, cl, cr, tanh_c, _c(g))

    return make_result(hc, (z, c_left, c_right), rule)


def lstm_step(xz, hc_prev, w_h, mask=None):
    """One masked LSTM step on packed states.

    ``xz`` (N, 4H) is the input projection plus bias, ``hc_prev`` (N, 2H)
    packs ``[h, c]`` and ``w_h`` (H, 4H) is the recurrent matrix.  Rows
    where ``mask`` is False carry ``hc_prev`` through unchanged.
    """
    n, h2 = hc_prev.shape
    h = h2 // 2
    if xz.shape != (n, 4 * h) or w_h.shape != (h, 4 * h):
        raise _shape_error("lstm_step", xz.shape, hc_prev.shape, w_h.shape)
    prev = hc_prev.data
    h_prev, c_prev = prev[:, :h], _c(prev[:, h:])
    z = _c(xz.data + h_prev @ w_h.data)
    hc, acts, tanh_c = kernels.lstm_forward(z, c_prev)
    keep = None
    if mask is not None:
        keep = np.asarray(mask, dtype=bool)[:, None]
        hc = np.where(keep, hc, prev)

    def rule(g):
        g_new = g if keep is None else np.where(keep, g, 0)
        dz, dc = kernels.lstm_backward(acts, c_prev, tanh_c, _c(g_new))
        dprev = np.empty_like(prev)
        dprev[:, :h] = dz @ w_h.data.T
        dprev[:, h:] = dc
        if keep is not None:
            dprev += np.where(keep, 0, g)
        dw = h_prev.T @ dz if w_h.requires_grad else None
        return dz, dprev, dw

    return make_result(hc, (xz, hc_prev, w_h), rule)


def tree_step(children, w, b):
    """Compose child pairs packed as rows ``[h_l, c_l, h_r, c_r]`` (N, 4H).

    ``w`` (2H, 5H) acts on ``[h_l, h_r]``; returns packed ``[h, c]`` (N, 2H).
    """
    n, h4 = children.shape
    h = h4 // 4
    if w.shape != (2 * h, 5 * h) or b.shape != (5 * h,):
        raise _shape_error("tree_step", children.shape, w.shape, b.shape)
    ch = children.data
    x = np.concatenate([ch[:, :h], ch[:, 2 * h:3 * h]], axis=1)
    cl, cr = _c(ch[:, h:2 * h]), _c(ch[:, 3 * h:])
    z = _c(x @ w.data + b.data)
    hc, acts, tanh_c = kernels.tree_forward(z, cl, cr)

    def rule(g):
        dz, dcl, dcr = kernels.tree_backward(acts, cl, cr, tanh_c, _c(g))
        dx = dz @ w.data.T
        dch = np.empty_like(ch)
        dch[:, :h] = dx[:, :h]
        dch[:, h:2 * h] = dcl
        dch[:, 2 * h:3 * h] = dx[:, h:]
        dch[:, 3 * h:] = dcr
        dw = x.T @ dz if w.requires_grad else None
        db = dz.sum(axis=0) if b.requires_grad else None
        return dch, dw, db

    return make_result(hc, (children, w, b), rule)


def gru_step(xz, h_prev, u):
    """One GRU step.

    ``xz`` (N, 3H) is the input projection plus bias with blocks
    ``[update, reset, candidate]``; ``u`` (H, 3H) is the recurrent matrix.
    ``h' = (1-u)*h + u*tanh(x_c + (r*h) U_c)``.
    """
    n, h = h_prev.shape
    if xz.shape != (n, 3 * h) or u.shape != (h, 3 * h):
        raise _shape_error("gru_step", xz.shape, h_prev.shape, u.shape)
    hp, ud, x = h_prev.data, u.data, xz.data
    gates = _sigmoid(x[:, :2 * h] + hp @ ud[:, :2 * h])
    upd, rst = gates[:, :h], gates[:, h:]
    rh = rst * hp
    cand = np.tanh(x[:, 2 * h:] + rh @ ud[:, 2 * h:])
    out = hp + upd * (cand - hp)

    def rule(g):
        d_cand = g * upd * (1.0 - cand * cand)
        d_upd = g * (cand - hp) * upd * (1.0 - upd)
        d_rh = d_cand @ ud[:, 2 * h:].T
        d_rst = d_rh * hp * rst * (1.0 - rst)
        d_gates = np.concatenate([d_upd, d_rst], axis=1)
        dxz = np.concatenate([d_gates, d_cand], axis=1)
        dh = g * (1.0 - upd) + d_rh * rst + d_gates @ ud[:, :2 * h].T
        du = None
        if u.requires_grad:
            du = np.concatenate([hp.T @ d_gates, rh.T @ d_cand], axis=1)
        return dxz, dh, du

    return make_result(out, (xz, h_prev, u), rule)
