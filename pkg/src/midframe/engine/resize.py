"""Factor-2 bilinear resampling as explicit matrix operators.

Down x2 averages 2x2 blocks (box filter); up x2 interpolates at half-pixel
centers with clamp-to-edge.  Both are linear maps applied separably along
H and W, so the exact adjoint is the transposed operator.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..errors import ShapeError
from .tensor import node


@lru_cache(maxsize=None)
def _down_matrix(n):
    m = np.zeros((n // 2, n))
    rows = np.arange(n // 2)
    m[rows, 2 * rows] = 0.5
    m[rows, 2 * rows + 1] = 0.5
    return m


@lru_cache(maxsize=None)
def _up_matrix(n):
    m = np.zeros((2 * n, n))
    for o in range(2 * n):
        src = (o + 0.5) / 2.0 - 0.5
        lo = int(np.floor(src))
        frac = src - lo
        lo_c = min(max(lo, 0), n - 1)
        hi_c = min(max(lo + 1, 0), n - 1)
        m[o, lo_c] += 1.0 - frac
        m[o, hi_c] += frac
    return m


def _apply_separable(x, mh, mw):
    # (H', H) @ (N, C, H, W) @ (W, W') via broadcasting matmul
    return np.matmul(np.matmul(mh, x), mw.T)


def downsample2x(x):
    """Halve H and W of an (N, C, H, W) tensor by 2x2 block averaging."""
    if x.ndim != 4:
        raise ShapeError("downsample2x expects 4-d input, got %r" % (x.shape,))
    _, _, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError("downsample2x needs even H and W, got %dx%d" % (h, w))
    mh = _down_matrix(h).astype(x.dtype)
    mw = _down_matrix(w).astype(x.dtype)
    out = _apply_separable(x.data, mh, mw)

    def backward(g):
        return (_apply_separable(g, mh.T, mw.T),)

    return node(out, (x,), backward)


def upsample2x(x):
    """Double H and W of an (N, C, H, W) tensor by bilinear interpolation."""
    if x.ndim != 4:
        raise ShapeError("upsample2x expects 4-d input, got %r" % (x.shape,))
    _, _, h, w = x.shape
    mh = _up_matrix(h).astype(x.dtype)
    mw = _up_matrix(w).astype(x.dtype)
    out = _apply_separable(x.data, mh, mw)

    def backward(g):
        return (_apply_separable(g, mh.T, mw.T),)

    return node(out, (x,), backward)


def bilinear_resize(x, direction):
    if direction == "up":
        return upsample2x(x)
    if direction == "down":
        return downsample2x(x)
    raise ShapeError("direction must be 'up' or 'down', got %r" % (direction,))
