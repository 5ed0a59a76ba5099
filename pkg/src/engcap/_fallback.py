"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``.

Signatures and semantics match the Cython module one-to-one.  The biquad
recursion loops over time in Python (vectorised across rows), so it is
roughly two orders of magnitude slower than the compiled version.
"""

import numpy as np


def sosfilt_rows(sos, x):
    n_t = x.shape[1]
    for b0, b1, b2, _, a1, a2 in np.asarray(sos, dtype=np.float64):
        z1 = np.zeros(x.shape[0])
        z2 = np.zeros(x.shape[0])
        for t in range(n_t):
            xin = x[:, t].copy()
            yout = b0 * xin + z1
            z1 = b1 * xin - a1 * yout + z2
            z2 = b2 * xin - a2 * yout
            x[:, t] = yout


def depthwise_forward(xpad, w, out_h, out_w, stride):
    kh, kw, _ = w.shape
    out = np.zeros((xpad.shape[0], out_h, out_w, xpad.shape[3]), dtype=xpad.dtype)
    for p in range(kh):
        for q in range(kw):
            patch = xpad[:, p:p + stride * (out_h - 1) + 1:stride, q:q + stride * (out_w - 1) + 1:stride, :]
            out += patch * w[p, q]
    return out


def depthwise_backward(xpad, w, dout, stride):
    kh, kw, _ = w.shape
    out_h, out_w = dout.shape[1], dout.shape[2]
    dx = np.zeros_like(xpad)
    dw = np.zeros_like(w)
    for p in range(kh):
        for q in range(kw):
            rows = slice(p, p + stride * (out_h - 1) + 1, stride)
            cols = slice(q, q + stride * (out_w - 1) + 1, stride)
            dx[:, rows, cols, :] += dout * w[p, q]
            dw[p, q] = np.einsum("bijc,bijc->c", dout, xpad[:, rows, cols, :])
    return dx, dw
