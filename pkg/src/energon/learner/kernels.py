"""Compiled 1-D convolution kernels (valid padding, stride 1).

The forward kernel accumulates every output element as
``bias[o] + sum_c sum_k w[o, c, k] * x[b, c, l + k]`` in exactly that
order, so a plain Python loop with the same order reproduces it bit for bit.
"""

import numba
import numpy as np


@numba.njit(cache=True, nogil=True)
def conv1d_forward(x, w, b):
    n_batch, n_in, length = x.shape
    n_out, _, width = w.shape
    out_len = length - width + 1
    out = np.empty((n_batch, n_out, out_len))
    for bi in range(n_batch):
        for o in range(n_out):
            row = out[bi, o]
            for l in range(out_len):
                row[l] = b[o]
            for c in range(n_in):
                xr = x[bi, c]
                for k in range(width):
                    wv = w[o, c, k]
                    for l in range(out_len):
                        row[l] += wv * xr[l + k]
    return out


@numba.njit(cache=True, nogil=True)
def conv1d_backward(dout, x, w):
    """Gradients w.r.t. input, weights and bias."""
    n_batch, n_in, length = x.shape
    n_out, _, width = w.shape
    out_len = dout.shape[2]
    dx = np.zeros_like(x)
    dw = np.zeros_like(w)
    db = np.zeros(n_out)
    for bi in range(n_batch):
        for o in range(n_out):
            g = dout[bi, o]
            acc = 0.0
            for l in range(out_len):
                acc += g[l]
            db[o] += acc
            for c in range(n_in):
                xr = x[bi, c]
                dxr = dx[bi, c]
                for k in range(width):
                    wv = w[o, c, k]
                    s = 0.0
                    for l in range(out_len):
                        s += g[l] * xr[l + k]
                        dxr[l + k] += wv * g[l]
                    dw[o, c, k] += s
    return dx, dw, db
