"""Convolution kernels behind the autodiff engine.

Two interchangeable backends compute the same quantities:

* ``numba``: ``@njit`` gather/scatter loops (im2col / col2im) feeding a BLAS
  product, compiled once per dtype and cached on disk.
* ``numpy``: per-tap strided slices contracted with ``np.tensordot``.

The backend is picked from the ``CADB_KERNELS`` environment variable
(``numba`` or ``numpy``; default ``numba`` when importable) and can be
switched at runtime with :func:`use_backend`.

All kernels take inputs that are already padded; padding, bias and shape
validation live in :mod:`cadbconformer.numerics.ops`.
"""
from __future__ import annotations

import logging
import os
from contextlib import contextmanager

import numpy as np

logger = logging.getLogger(__name__)

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

BACKENDS = ("numba", "numpy")


# ---------------------------------------------------------------------------
# numpy backend
# ---------------------------------------------------------------------------

def _tap_slice(p, q, sh, sw, dh, dw, ho, wo):
    r0 = p * dh
    c0 = q * dw
    return (slice(r0, r0 + sh * (ho - 1) + 1, sh), slice(c0, c0 + sw * (wo - 1) + 1, sw))


def _np_conv2d_forward(xp, w, sh, sw, dh, dw, ho, wo):
    co, ci, kh, kw = w.shape
    acc = np.zeros((co, xp.shape[0], ho, wo), dtype=xp.dtype)
    for p in range(kh):
        for q in range(kw):
            rs, cs = _tap_slice(p, q, sh, sw, dh, dw, ho, wo)
            acc += np.tensordot(w[:, :, p, q], xp[:, :, rs, cs], axes=([1], [1]))
    return np.ascontiguousarray(acc.transpose(1, 0, 2, 3))


def _np_conv2d_backward_input(g, w, sh, sw, dh, dw, hp, wp):
    b = g.shape[0]
    co, ci, kh, kw = w.shape
    ho, wo = g.shape[2], g.shape[3]
    gxp = np.zeros((ci, b, hp, wp), dtype=g.dtype)
    for p in range(kh):
        for q in range(kw):
            rs, cs = _tap_slice(p, q, sh, sw, dh, dw, ho, wo)
            gxp[:, :, rs, cs] += np.tensordot(w[:, :, p, q], g, axes=([0], [1]))
    return np.ascontiguousarray(gxp.transpose(1, 0, 2, 3))


def _np_conv2d_backward_weight(xp, g, sh, sw, dh, dw, kh, kw):
    co = g.shape[1]
    ci = xp.shape[1]
    ho, wo = g.shape[2], g.shape[3]
    gw = np.empty((co, ci, kh, kw), dtype=g.dtype)
    for p in range(kh):
        for q in range(kw):
            rs, cs = _tap_slice(p, q, sh, sw, dh, dw, ho, wo)
            gw[:, :, p, q] = np.tensordot(g, xp[:, :, rs, cs], axes=([0, 2, 3], [0, 2, 3]))
    return gw


def _np_dwconv1d_forward(xp, w):
    c, k = w.shape
    n = xp.shape[2] - k + 1
    out = np.zeros((xp.shape[0], c, n), dtype=xp.dtype)
    for p in range(k):
        out += w[:, p][None, :, None] * xp[:, :, p:p + n]
    return out


def _np_dwconv1d_backward_input(g, w):
    c, k = w.shape
    n = g.shape[2]
    gxp = np.zeros((g.shape[0], c, n + k - 1), dtype=g.dtype)
    for p in range(k):
        gxp[:, :, p:p + n] += w[:, p][None, :, None] * g
    return gxp


def _np_dwconv1d_backward_weight(xp, g, k):
    n = g.shape[2]
    gw = np.empty((g.shape[1], k), dtype=g.dtype)
    for p in range(k):
        gw[:, p] = np.einsum("bcn,bcn->c", g, xp[:, :, p:p + n])
    return gw


# ---------------------------------------------------------------------------
# numba backend
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def _im2col(xb, kh, kw, sh, sw, dh, dw, ho, wo):
        # xb: (Ci, Hp, Wp) -> (Ci*kh*kw, ho*wo)
        ci = xb.shape[0]
        cols = np.empty((ci * kh * kw, ho * wo), dtype=xb.dtype)
        for c in range(ci):
            for p in range(kh):
                for q in range(kw):
                    row = (c * kh + p) * kw + q
                    for i in range(ho):
                        r = i * sh + p * dh
                        base = i * wo
                        for j in range(wo):
                            cols[row, base + j] = xb[c, r, j * sw + q * dw]
        return cols

    @njit(cache=True)
    def _im2col_t(xb, kh, kw, sh, sw, dh, dw, ho, wo):
        # transposed layout (ho*wo, Ci*kh*kw) for the weight-gradient product
        ci = xb.shape[0]
        k = ci * kh * kw
        cols = np.empty((ho * wo, k), dtype=xb.dtype)
        for i in range(ho):
            for j in range(wo):
                pos = i * wo + j
                for c in range(ci):
                    for p in range(kh):
                        r = i * sh + p * dh
                        for q in range(kw):
                            cols[pos, (c * kh + p) * kw + q] = xb[c, r, j * sw + q * dw]
        return cols

    @njit(cache=True)
    def _col2im_add(cols, gxb, kh, kw, sh, sw, dh, dw, ho, wo):
        ci = gxb.shape[0]
        for c in range(ci):
            for p in range(kh):
                for q in range(kw):
                    row = (c * kh + p) * kw + q
                    for i in range(ho):
                        r = i * sh + p * dh
                        base = i * wo
                        for j in range(wo):
                            gxb[c, r, j * sw + q * dw] += cols[row, base + j]

    @njit(cache=True)
    def _nb_conv2d_forward(xp, w, sh, sw, dh, dw, ho, wo):
        b = xp.shape[0]
        co, ci, kh, kw = w.shape
        wm = np.ascontiguousarray(w).reshape(co, ci * kh * kw)
        out = np.empty((b, co, ho * wo), dtype=xp.dtype)
        for n in range(b):
            cols = _im2col(xp[n], kh, kw, sh, sw, dh, dw, ho, wo)
            out[n] = np.dot(wm, cols)
        return out.reshape(b, co, ho, wo)

    @njit(cache=True)
    def _nb_conv2d_backward_input(g, w, sh, sw, dh, dw, hp, wp):
        b, co, ho, wo = g.shape
        ci, kh, kw = w.shape[1], w.shape[2], w.shape[3]
        wt = np.ascontiguousarray(np.ascontiguousarray(w).reshape(co, ci * kh * kw).T)
        gxp = np.zeros((b, ci, hp, wp), dtype=g.dtype)
        for n in range(b):
            gm = np.ascontiguousarray(g[n]).reshape(co, ho * wo)
            cols = np.dot(wt, gm)
            _col2im_add(cols, gxp[n], kh, kw, sh, sw, dh, dw, ho, wo)
        return gxp

    @njit(cache=True)
    def _nb_conv2d_backward_weight(xp, g, sh, sw, dh, dw, kh, kw):
        b, co, ho, wo = g.shape
        ci = xp.shape[1]
        gw = np.zeros((co, ci * kh * kw), dtype=g.dtype)
        for n in range(b):
            cols = _im2col_t(xp[n], kh, kw, sh, sw, dh, dw, ho, wo)
            gm = np.ascontiguousarray(g[n]).reshape(co, ho * wo)
            gw += np.dot(gm, cols)
        return gw.reshape(co, ci, kh, kw)

    @njit(cache=True)
    def _nb_dwconv1d_forward(xp, w):
        b, c, lp = xp.shape
        k = w.shape[1]
        n = lp - k + 1
        out = np.zeros((b, c, n), dtype=xp.dtype)
        for i in range(b):
            for ch in range(c):
                for p in range(k):
                    wv = w[ch, p]
                    for t in range(n):
                        out[i, ch, t] += wv * xp[i, ch, t + p]
        return out

    @njit(cache=True)
    def _nb_dwconv1d_backward_input(g, w):
        b, c, n = g.shape
        k = w.shape[1]
        gxp = np.zeros((b, c, n + k - 1), dtype=g.dtype)
        for i in range(b):
            for ch in range(c):
                for p in range(k):
                    wv = w[ch, p]
                    for t in range(n):
                        gxp[i, ch, t + p] += wv * g[i, ch, t]
        return gxp

    @njit(cache=True)
    def _nb_dwconv1d_backward_weight(xp, g, k):
        b, c, n = g.shape
        gw = np.zeros((c, k), dtype=g.dtype)
        for ch in range(c):
            for p in range(k):
                s = 0.0
                for i in range(b):
                    for t in range(n):
                        s += g[i, ch, t] * xp[i, ch, t + p]
                gw[ch, p] = s
        return gw


_IMPLS = {
    "numpy": {
        "conv2d_forward": _np_conv2d_forward,
        "conv2d_backward_input": _np_conv2d_backward_input,
        "conv2d_backward_weight": _np_conv2d_backward_weight,
        "dwconv1d_forward": _np_dwconv1d_forward,
        "dwconv1d_backward_input": _np_dwconv1d_backward_input,
        "dwconv1d_backward_weight": _np_dwconv1d_backward_weight,
    },
}
if HAVE_NUMBA:
    _IMPLS["numba"] = {
        "conv2d_forward": _nb_conv2d_forward,
        "conv2d_backward_input": _nb_conv2d_backward_input,
        "conv2d_backward_weight": _nb_conv2d_backward_weight,
        "dwconv1d_forward": _nb_dwconv1d_forward,
        "dwconv1d_backward_input": _nb_dwconv1d_backward_input,
        "dwconv1d_backward_weight": _nb_dwconv1d_backward_weight,
    }


def _initial_backend() -> str:
    name = os.environ.get("CADB_KERNELS", "numba").strip().lower()
    if name not in BACKENDS:
        raise ValueError(f"CADB_KERNELS must be one of {BACKENDS}, got {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        logger.warning("numba is not importable; falling back to numpy kernels")
        return "numpy"
    return name


_backend = _initial_backend()


def get_backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    global _backend
    if name not in _IMPLS:
        raise ValueError(f"kernel backend {name!r} unavailable; have {sorted(_IMPLS)}")
    _backend = name


@contextmanager
def use_backend(name: str):
    """Temporarily switch the kernel backend."""
    previous = get_backend()
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


def conv2d_forward(xp, w, stride, dilation, out_hw):
    return _IMPLS[_backend]["conv2d_forward"](
        np.ascontiguousarray(xp), np.ascontiguousarray(w), stride[0], stride[1],
        dilation[0], dilation[1], out_hw[0], out_hw[1])


def conv2d_backward_input(g, w, stride, dilation, padded_hw):
    return _IMPLS[_backend]["conv2d_backward_input"](
        np.ascontiguousarray(g), np.ascontiguousarray(w), stride[0], stride[1],
        dilation[0], dilation[1], padded_hw[0], padded_hw[1])


def conv2d_backward_weight(xp, g, stride, dilation, kernel_hw):
    return _IMPLS[_backend]["conv2d_backward_weight"](
        np.ascontiguousarray(xp), np.ascontiguousarray(g), stride[0], stride[1],
        dilation[0], dilation[1], kernel_hw[0], kernel_hw[1])


def dwconv1d_forward(xp, w):
    return _IMPLS[_backend]["dwconv1d_forward"](np.ascontiguousarray(xp), np.ascontiguousarray(w))


def dwconv1d_backward_input(g, w):
    return _IMPLS[_backend]["dwconv1d_backward_input"](np.ascontiguousarray(g), np.ascontiguousarray(w))


def dwconv1d_backward_weight(xp, g, k):
    return _IMPLS[_backend]["dwconv1d_backward_weight"](np.ascontiguousarray(xp), np.ascontiguousarray(g), k)
