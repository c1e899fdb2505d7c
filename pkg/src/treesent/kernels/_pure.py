"""Numpy reference implementation of the fused recurrent-cell kernels.

Gate pre-activations arrive as one matrix ``z`` with column blocks of width
``H``: ``[f, i, c~, o]`` for the sequential cell and ``[f_l, f_r, i, c~, o]``
for the binary tree cell.  Forward kernels return ``(hc, acts, tanh_c)``
where ``hc = [h, c]`` is (N, 2H) and ``acts`` holds activated gates.
"""

import numpy as np


def _sigmoid(z):
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(z.dtype, copy=False)


def lstm_forward(z, c_prev):
    h_dim = c_prev.shape[1]
    acts = _sigmoid(z)
    acts[:, 2 * h_dim:3 * h_dim] = np.tanh(z[:, 2 * h_dim:3 * h_dim])
    f, i, g, o = (acts[:, k * h_dim:(k + 1) * h_dim] for k in range(4))
    c = f * c_prev + i * g
    tanh_c = np.tanh(c)
    hc = np.concatenate([o * tanh_c, c], axis=1)
    return hc, acts, tanh_c


def lstm_backward(acts, c_prev, tanh_c, dhc):
    h_dim = c_prev.shape[1]
    f, i, g, o = (acts[:, k * h_dim:(k + 1) * h_dim] for k in range(4))
    dh = dhc[:, :h_dim]
    dc = dhc[:, h_dim:] + dh * o * (1.0 - tanh_c * tanh_c)
    dz = np.empty_like(acts)
    dz[:, :h_dim] = dc * c_prev * f * (1.0 - f)
    dz[:, h_dim:2 * h_dim] = dc * g * i * (1.0 - i)
    dz[:, 2 * h_dim:3 * h_dim] = dc * i * (1.0 - g * g)
    dz[:, 3 * h_dim:] = dh * tanh_c * o * (1.0 - o)
    return dz, dc * f


def tree_forward(z, c_left, c_right):
    h_dim = c_left.shape[1]
    acts = _sigmoid(z)
    acts[:, 3 * h_dim:4 * h_dim] = np.tanh(z[:, 3 * h_dim:4 * h_dim])
    fl, fr, i, g, o = (acts[:, k * h_dim:(k + 1) * h_dim] for k in range(5))
    c = fl * c_left + fr * c_right + i * g
    tanh_c = np.tanh(c)
    hc = np.concatenate([o * tanh_c, c], axis=1)
    return hc, acts, tanh_c


def tree_backward(acts, c_left, c_right, tanh_c, dhc):
    h_dim = c_left.shape[1]
    fl, fr, i, g, o = (acts[:, k * h_dim:(k + 1) * h_dim] for k in range(5))
    dh = dhc[:, :h_dim]
    dc = dhc[:, h_dim:] + dh * o * (1.0 - tanh_c * tanh_c)
    dz = np.empty_like(acts)
    dz[:, :h_dim] = dc * c_left * fl * (1.0 - fl)
    dz[:, h_dim:2 * h_dim] = dc * c_right * fr * (1.0 - fr)
    dz[:, 2 * h_dim:3 * h_dim] = dc * g * i * (1.0 - i)
    dz[:, 3 * h_dim:4 * h_dim] = dc * i * (1.0 - g * g)
    dz[:, 4 * h_dim:] = dh * tanh_c * o * (1.0 - o)
    return dz, dc * fl, dc * fr
