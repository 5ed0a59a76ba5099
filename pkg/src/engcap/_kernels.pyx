# cython: language_level=3
"""Compiled inner loops: biquad cascade recursion and depthwise convolution.

Every routine here has a numpy twin in ``engcap._fallback`` with the same
signature; ``engcap._backend`` picks one at import time.
"""

import numpy as np
cimport cython

ctypedef fused real:
    float
    double


def sosfilt_rows(const double[:, ::1] sos, double[:, ::1] x):
    """Filter every row of ``x`` in place through the cascade ``sos``.

    ``sos`` rows are ``(b0, b1, b2, 1, a1, a2)``.  Transposed direct form II,
    zero initial state.
    """
    cdef Py_ssize_t n_rows = x.shape[0]
    cdef Py_ssize_t n_t = x.shape[1]
    cdef Py_ssize_t n_sec = sos.shape[0]
    cdef Py_ssize_t r, t, s
    cdef double b0, b1, b2, a1, a2, z1, z2, xin, yout
    with nogil:
        for r in range(n_rows):
            for s in range(n_sec):
                b0 = sos[s, 0]
                b1 = sos[s, 1]
                b2 = sos[s, 2]
                a1 = sos[s, 4]
                a2 = sos[s, 5]
                z1 = 0.0
                z2 = 0.0
                for t in range(n_t):
                    xin = x[r, t]
                    yout = b0 * xin + z1
                    z1 = b1 * xin - a1 * yout + z2
                    z2 = b2 * xin - a2 * yout
                    x[r, t] = yout


def depthwise_forward(real[:, :, :, ::1] xpad, real[:, :, ::1] w,
                      Py_ssize_t out_h, Py_ssize_t out_w, Py_ssize_t stride):
    """``out[b,i,j,c] = sum_pq xpad[b, i*s+p, j*s+q, c] * w[p,q,c]``."""
    cdef Py_ssize_t nb = xpad.shape[0]
    cdef Py_ssize_t nc = xpad.shape[3]
    cdef Py_ssize_t kh = w.shape[0]
    cdef Py_ssize_t kw = w.shape[1]
    cdef Py_ssize_t b, i, j, p, q, c
    dtype = np.float32 if real is float else np.float64
    out_arr = np.zeros((nb, out_h, out_w, nc), dtype=dtype)
    cdef real[:, :, :, ::1] out = out_arr
    with nogil:
        for b in range(nb):
            for i in range(out_h):
                for j in range(out_w):
                    for p in range(kh):
                        for q in range(kw):
                            for c in range(nc):
                                out[b, i, j, c] += xpad[b, i * stride + p, j * stride + q, c] * w[p, q, c]
    return out_arr


def depthwise_backward(real[:, :, :, ::1] xpad, real[:, :, ::1] w,
                       real[:, :, :, ::1] dout, Py_ssize_t stride):
    """Return ``(d_xpad, d_w)`` for :func:`depthwise_forward`."""
    cdef Py_ssize_t nb = xpad.shape[0]
    cdef Py_ssize_t nc = xpad.shape[3]
    cdef Py_ssize_t kh = w.shape[0]
    cdef Py_ssize_t kw = w.shape[1]
    cdef Py_ssize_t out_h = dout.shape[1]
    cdef Py_ssize_t out_w = dout.shape[2]
    cdef Py_ssize_t b, i, j, p, q, c, ii, jj
    cdef real g
    dtype = np.float32 if real is float else np.float64
    dx_arr = np.zeros((xpad.shape[0], xpad.shape[1], xpad.shape[2], nc), dtype=dtype)
    dw_arr = np.zeros((kh, kw, nc), dtype=dtype)
    cdef real[:, :, :, ::1] dx = dx_arr
    cdef real[:, :, ::1] dw = dw_arr
    with nogil:
        for b in range(nb):
            for i in range(out_h):
                for j in range(out_w):
                    for p in range(kh):
                        ii = i * stride + p
                        for q in range(kw):
                            jj = j * stride + q
                            for c in range(nc):
                                g = dout[b, i, j, c]
                                dx[b, ii, jj, c] += g * w[p, q, c]
                                dw[p, q, c] += g * xpad[b, ii, jj, c]
    return dx_arr, dw_arr
