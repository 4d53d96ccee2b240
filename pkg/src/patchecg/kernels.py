"""Hot numeric kernels.

Each kernel has a pure-numpy implementation and a loop implementation that
numba compiles. The compiled convolutions unroll windows per sample (im2col)
and hand the contraction to BLAS, so they never fall far behind ``einsum``. The module-level names (``conv1d_forward`` and friends)
point at whichever path :mod:`patchecg._accel` selected at import time.

Convolution layout is channel-first: ``x`` is ``(B, C_in, L)`` and the
weight is ``(C_out, C_in, K)``. Padding is given as ``(left, right)`` zeros
and the stride is always 1, so the output length is ``L + left + right - K + 1``.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ._accel import USE_NUMBA, njit


def _pad(x, pad):
    left, right = pad
    if left == 0 and right == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (left, right)))


# --------------------------------------------------------------------- numpy


def conv1d_forward_numpy(x, w, pad):
    k = w.shape[2]
    windows = sliding_window_view(_pad(x, pad), k, axis=2)  # (B, Cin, Lout, K)
    return np.einsum("bclk,ock->bol", windows, w, optimize=True)


def conv1d_backward_numpy(x, w, pad, gout):
    """Return ``(grad_x, grad_w)`` for :func:`conv1d_forward_numpy`."""
    k = w.shape[2]
    xp = _pad(x, pad)
    windows = sliding_window_view(xp, k, axis=2)
    grad_w = np.einsum("bol,bclk->ock", gout, windows, optimize=True)
    cols = np.einsum("bol,ock->bclk", gout, w, optimize=True)
    lout = gout.shape[2]
    gxp = np.zeros_like(xp)
    for j in range(k):
        gxp[:, :, j:j + lout] += cols[:, :, :, j]
    left, right = pad
    grad_x = gxp[:, :, left:xp.shape[2] - right]
    return grad_x, grad_w


def scatter_add_rows_numpy(out, index, rows):
    """``out[index[r]] += rows[r]`` with repeated indices accumulated."""
    np.add.at(out, index, rows)
    return out


# --------------------------------------------------------------------- loops


def _im2col(xp, b, k, lout, cols):
    cin = xp.shape[1]
    for c in range(cin):
        for j in range(k):
            cols[c * k + j, :] = xp[b, c, j:j + lout]


def _conv1d_forward_loops(xp, w2, k, out):
    """Per-sample im2col followed by one BLAS matmul with ``w2`` = (C_out, C_in*K)."""
    b_n, cin, _ = xp.shape
    lout = out.shape[2]
    cols = np.empty((cin * k, lout), dtype=xp.dtype)
    for b in range(b_n):
        _im2col(xp, b, k, lout, cols)
        out[b] = w2 @ cols
    return out


def _conv1d_backward_loops(xp, w2, k, gout, gxp, gw2):
    b_n, cin, _ = xp.shape
    lout = gout.shape[2]
    cols = np.empty((cin * k, lout), dtype=xp.dtype)
    w2t = np.ascontiguousarray(w2.T)
    for b in range(b_n):
        _im2col(xp, b, k, lout, cols)
        g = gout[b]
        gw2 += g @ cols.T
        gcols = w2t @ g
        for c in range(cin):
            for j in range(k):
                gxp[b, c, j:j + lout] += gcols[c * k + j]


def _scatter_add_rows_loops(out, index, rows):
    for r in range(index.shape[0]):
        i = index[r]
        for d in range(rows.shape[1]):
            out[i, d] += rows[r, d]
    return out


_im2col = njit(_im2col) or _im2col  # looked up by the loops when they compile
_conv1d_forward_jit = njit(_conv1d_forward_loops)
_conv1d_backward_jit = njit(_conv1d_backward_loops)
_scatter_add_rows_jit = njit(_scatter_add_rows_loops)


def conv1d_forward_numba(x, w, pad):
    xp = np.ascontiguousarray(_pad(x, pad))
    cout, cin, k = w.shape
    w2 = np.ascontiguousarray(w, dtype=xp.dtype).reshape(cout, cin * k)
    out = np.empty((xp.shape[0], cout, xp.shape[2] - k + 1), dtype=xp.dtype)
    return _conv1d_forward_jit(xp, w2, k, out)


def conv1d_backward_numba(x, w, pad, gout):
    xp = np.ascontiguousarray(_pad(x, pad))
    cout, cin, k = w.shape
    w2 = np.ascontiguousarray(w, dtype=xp.dtype).reshape(cout, cin * k)
    gout = np.ascontiguousarray(gout, dtype=xp.dtype)
    gxp = np.zeros_like(xp)
    gw2 = np.zeros_like(w2)
    _conv1d_backward_jit(xp, w2, k, gout, gxp, gw2)
    left, right = pad
    return gxp[:, :, left:xp.shape[2] - right], gw2.reshape(w.shape)


def scatter_add_rows_numba(out, index, rows):
    rows2 = np.ascontiguousarray(rows.reshape(rows.shape[0], -1), dtype=out.dtype)
    flat = out.reshape(out.shape[0], -1)
    _scatter_add_rows_jit(flat, np.ascontiguousarray(index, dtype=np.int64), rows2)
    return out


if USE_NUMBA:
    conv1d_forward = conv1d_forward_numba
    conv1d_backward = conv1d_backward_numba
    scatter_add_rows = scatter_add_rows_numba
else:
    conv1d_forward = conv1d_forward_numpy
    conv1d_backward = conv1d_backward_numpy
    scatter_add_rows = scatter_add_rows_numpy
