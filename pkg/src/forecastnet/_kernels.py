"""Hot loops for the convolutional hidden cell.

Two interchangeable implementations live here: plain numpy (always available)
and numba ``@njit`` loops. The active set is chosen at import time; set
``FORECASTNET_DISABLE_JIT=1`` to force the numpy path. Both paths operate on
C-contiguous float64 arrays of shape ``(batch, channels, length)``.
"""

from __future__ import annotations

import os
from types import SimpleNamespace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

JIT_DISABLED = os.environ.get("FORECASTNET_DISABLE_JIT", "").strip().lower() in {"1", "true", "yes"}


# ---------------------------------------------------------------- numpy path


def _np_conv1d_forward(x, w, b):
    k = w.shape[2]
    win = sliding_window_view(x, k, axis=2)  # (B, Ci, Lo, k)
    return np.einsum("bclk,ock->bol", win, w, optimize=True) + b[None, :, None]


def _np_conv1d_backward(x, w, gy):
    k = w.shape[2]
    lo = gy.shape[2]
    win = sliding_window_view(x, k, axis=2)
    gw = np.einsum("bol,bclk->ock", gy, win, optimize=True)
    gb = gy.sum(axis=(0, 2))
    gx = np.zeros_like(x)
    for j in range(k):
        gx[:, :, j : j + lo] += np.einsum("bol,oc->bcl", gy, w[:, :, j], optimize=True)
    return gx, gw, gb


def _np_avgpool_forward(x, pool, stride):
    win = sliding_window_view(x, pool, axis=2)[:, :, ::stride]
    return win.mean(axis=3)


def _np_avgpool_backward(gy, length, pool, stride):
    b, c, lo = gy.shape
    gx = np.zeros((b, c, length))
    share = gy / pool
    span = stride * (lo - 1) + 1
    for j in range(pool):
        gx[:, :, j : j + span : stride] += share
    return gx


numpy_impl = SimpleNamespace(
    name="numpy",
    conv1d_forward=_np_conv1d_forward,
    conv1d_backward=_np_conv1d_backward,
    avgpool_forward=_np_avgpool_forward,
    avgpool_backward=_np_avgpool_backward,
)


# ---------------------------------------------------------------- numba path

BLAS_MIN_REDUCTION = 16


def _build_numba_impl():
    njit = numba.njit(cache=True, fastmath=True)

    @njit
    def conv1d_forward(x, w, b):
        nb, ci, length = x.shape
        co, _, k = w.shape
        lo = length - k + 1
        out = np.empty((nb, co, lo))
        for n in range(nb):
            for o in range(co):
                row = out[n, o]
                row[:] = b[o]
                for c in range(ci):
                    xr = x[n, c]
                    for j in range(k):
                        wv = w[o, c, j]
                        for t in range(lo):
                            row[t] += wv * xr[t + j]
        return out

    @njit
    def conv1d_backward(x, w, gy):
        nb, ci, length = x.shape
        co, _, k = w.shape
        lo = gy.shape[2]
        gx = np.zeros_like(x)
        gw = np.zeros_like(w)
        gb = np.zeros(co)
        for n in range(nb):
            for o in range(co):
                g = gy[n, o]
                acc = 0.0
                for t in range(lo):
                    acc += g[t]
                gb[o] += acc
                for c in range(ci):
                    xr = x[n, c]
                    gxr = gx[n, c]
                    for j in range(k):
                        wv = w[o, c, j]
                        s = 0.0
                        for t in range(lo):
                            s += g[t] * xr[t + j]
                        gw[o, c, j] += s
                        for t in range(lo):
                            gxr[t + j] += g[t] * wv
        return gx, gw, gb

    @njit
    def avgpool_forward(x, pool, stride):
        nb, c, length = x.shape
        lo = (length - pool) // stride + 1
        out = np.zeros((nb, c, lo))
        inv = 1.0 / pool
        for n in range(nb):
            for ch in range(c):
                xr = x[n, ch]
                row = out[n, ch]
                for j in range(pool):
                    for t in range(lo):
                        row[t] += xr[t * stride + j]
                for t in range(lo):
                    row[t] *= inv
        return out

    @njit
    def avgpool_backward(gy, length, pool, stride):
        nb, c, lo = gy.shape
        gx = np.zeros((nb, c, length))
        inv = 1.0 / pool
        for n in range(nb):
            for ch in range(c):
                g = gy[n, ch]
                gr = gx[n, ch]
                for j in range(pool):
                    for t in range(lo):
                        gr[t * stride + j] += g[t] * inv
        return gx

    def conv1d_forward_dispatch(x, w, b):
        # wide channel contractions are faster through BLAS (einsum) than the scalar loop
        if w.shape[1] * w.shape[2] >= BLAS_MIN_REDUCTION:
            return _np_conv1d_forward(x, w, b)
        return conv1d_forward(x, w, b)

    return SimpleNamespace(
        name="numba",
        conv1d_forward=conv1d_forward_dispatch,
        conv1d_forward_loop=conv1d_forward,
        conv1d_backward=conv1d_backward,
        avgpool_forward=avgpool_forward,
        avgpool_backward=avgpool_backward,
    )


numba_impl = _build_numba_impl() if HAVE_NUMBA else None

active = numpy_impl if (JIT_DISABLED or numba_impl is None) else numba_impl
