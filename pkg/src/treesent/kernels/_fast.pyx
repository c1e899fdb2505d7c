# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled fused recurrent-cell kernels; same contract as ``_pure``.

Scalar libm ``exp`` is far slower than numpy's vectorized one, so each
forward kernel stages exponent arguments in a buffer, calls ``np.exp`` on it
and does the gate algebra in plain loops the compiler can vectorize.
Sigmoid is ``1 / (1 + exp(-x))`` and tanh is ``2 / (1 + exp(-2x)) - 1``.
"""

import numpy as np

ctypedef fused real:
    float
    double

# exponent arguments are clipped here; exp(80) is finite in single precision
cdef double _CLIP = 80.0


cdef inline real _arg(real x, real scale) noexcept nogil:
    x = -scale * x
    return x if x < _CLIP else _CLIP


def lstm_forward(real[:, ::1] z, real[:, ::1] c_prev):
    cdef Py_ssize_t n = c_prev.shape[0], h = c_prev.shape[1], r, k
    dtype = np.float32 if real is float else np.float64
    hc_arr = np.empty((n, 2 * h), dtype=dtype)
    acts_arr = np.empty((n, 4 * h), dtype=dtype)
    tc_arr = np.empty((n, h), dtype=dtype)
    cdef real[:, ::1] hc = hc_arr
    cdef real[:, ::1] acts = acts_arr
    cdef real[:, ::1] tc = tc_arr
    cdef real f, i, g, o, c
    with nogil:
        for r in range(n):
            for k in range(h):
                acts[r, k] = _arg(z[r, k], 1)
                acts[r, h + k] = _arg(z[r, h + k], 1)
                acts[r, 2 * h + k] = _arg(z[r, 2 * h + k], 2)
                acts[r, 3 * h + k] = _arg(z[r, 3 * h + k], 1)
    np.exp(acts_arr, out=acts_arr)
    with nogil:
        for r in range(n):
            for k in range(h):
                f = 1 / (1 + acts[r, k])
                i = 1 / (1 + acts[r, h + k])
                g = 2 / (1 + acts[r, 2 * h + k]) - 1
                o = 1 / (1 + acts[r, 3 * h + k])
                c = f * c_prev[r, k] + i * g
                acts[r, k] = f
                acts[r, h + k] = i
                acts[r, 2 * h + k] = g
                acts[r, 3 * h + k] = o
                hc[r, h + k] = c
                tc[r, k] = _arg(c, 2)
    np.exp(tc_arr, out=tc_arr)
    with nogil:
        for r in range(n):
            for k in range(h):
                tc[r, k] = 2 / (1 + tc[r, k]) - 1
                hc[r, k] = acts[r, 3 * h + k] * tc[r, k]
    return hc_arr, acts_arr, tc_arr


def lstm_backward(real[:, ::1] acts, real[:, ::1] c_prev, real[:, ::1] tanh_c, real[:, ::1] dhc):
    cdef Py_ssize_t n = c_prev.shape[0], h = c_prev.shape[1], r, k
    dtype = np.float32 if real is float else np.float64
    dz_arr = np.empty((n, 4 * h), dtype=dtype)
    dcp_arr = np.empty((n, h), dtype=dtype)
    cdef real[:, ::1] dz = dz_arr
    cdef real[:, ::1] dcp = dcp_arr
    cdef real f, i, g, o, t, dh, dc
    with nogil:
        for r in range(n):
            for k in range(h):
                f = acts[r, k]
                i = acts[r, h + k]
                g = acts[r, 2 * h + k]
                o = acts[r, 3 * h + k]
                t = tanh_c[r, k]
                dh = dhc[r, k]
                dc = dhc[r, h + k] + dh * o * (1.0 - t * t)
                dz[r, k] = dc * c_prev[r, k] * f * (1.0 - f)
                dz[r, h + k] = dc * g * i * (1.0 - i)
                dz[r, 2 * h + k] = dc * i * (1.0 - g * g)
                dz[r, 3 * h + k] = dh * t * o * (1.0 - o)
                dcp[r, k] = dc * f
    return dz_arr, dcp_arr


def tree_forward(real[:, ::1] z, real[:, ::1] c_left, real[:, ::1] c_right):
    cdef Py_ssize_t n = c_left.shape[0], h = c_left.shape[1], r, k
    dtype = np.float32 if real is float else np.float64
    hc_arr = np.empty((n, 2 * h), dtype=dtype)
    acts_arr = np.empty((n, 5 * h), dtype=dtype)
    tc_arr = np.empty((n, h), dtype=dtype)
    cdef real[:, ::1] hc = hc_arr
    cdef real[:, ::1] acts = acts_arr
    cdef real[:, ::1] tc = tc_arr
    cdef real fl, fr, i, g, o, c
    with nogil:
        for r in range(n):
            for k in range(h):
                acts[r, k] = _arg(z[r, k], 1)
                acts[r, h + k] = _arg(z[r, h + k], 1)
                acts[r, 2 * h + k] = _arg(z[r, 2 * h + k], 1)
                acts[r, 3 * h + k] = _arg(z[r, 3 * h + k], 2)
                acts[r, 4 * h + k] = _arg(z[r, 4 * h + k], 1)
    np.exp(acts_arr, out=acts_arr)
    with nogil:
        for r in range(n):
            for k in range(h):
                fl = 1 / (1 + acts[r, k])
                fr = 1 / (1 + acts[r, h + k])
                i = 1 / (1 + acts[r, 2 * h + k])
                g = 2 / (1 + acts[r, 3 * h + k]) - 1
                o = 1 / (1 + acts[r, 4 * h + k])
                c = fl * c_left[r, k] + fr * c_right[r, k] + i * g
                acts[r, k] = fl
                acts[r, h + k] = fr
                acts[r, 2 * h + k] = i
                acts[r, 3 * h + k] = g
                acts[r, 4 * h + k] = o
                hc[r, h + k] = c
                tc[r, k] = _arg(c, 2)
    np.exp(tc_arr, out=tc_arr)
    with nogil:
        for r in range(n):
            for k in range(h):
                tc[r, k] = 2 / (1 + tc[r, k]) - 1
                hc[r, k] = acts[r, 4 * h + k] * tc[r, k]
    return hc_arr, acts_arr, tc_arr


def tree_backward(real[:, ::1] acts, real[:, ::1] c_left, real[:, ::1] c_right,
                  real[:, ::1] tanh_c, real[:, ::1] dhc):
    cdef Py_ssize_t n = c_left.shape[0], h = c_left.shape[1], r, k
    dtype = np.float32 if real is float else np.float64
    dz_arr = np.empty((n, 5 * h), dtype=dtype)
    dcl_arr = np.empty((n, h), dtype=dtype)
    dcr_arr = np.empty((n, h), dtype=dtype)
    cdef real[:, ::1] dz = dz_arr
    cdef real[:, ::1] dcl = dcl_arr
    cdef real[:, ::1] dcr = dcr_arr
    cdef real fl, fr, i, g, o, t, dh, dc
    with nogil:
        for r in range(n):
            for k in range(h):
                fl = acts[r, k]
                fr = acts[r, h + k]
                i = acts[r, 2 * h + k]
                g = acts[r, 3 * h + k]
                o = acts[r, 4 * h + k]
                t = tanh_c[r, k]
                dh = dhc[r, k]
                dc = dhc[r, h + k] + dh * o * (1.0 - t * t)
                dz[r, k] = dc * c_left[r, k] * fl * (1.0 - fl)
                dz[r, h + k] = dc * c_right[r, k] * fr * (1.0 - fr)
                dz[r, 2 * h + k] = dc * g * i * (1.0 - i)
                dz[r, 3 * h + k] = dc * i * (1.0 - g * g)
                dz[r, 4 * h + k] = dh * t * o * (1.0 - o)
                dcl[r, k] = dc * fl
                dcr[r, k] = dc * fr
    return dz_arr, dcl_arr, dcr_arr
