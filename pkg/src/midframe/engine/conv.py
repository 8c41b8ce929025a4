"""2D cross-correlation with zero padding, forward and adjoints.

The forward pass materializes the im2col matrix once and runs a single GEMM;
the backward pass reuses that matrix for the kernel gradient and folds the
input gradient back with k*k strided slice additions.  Exact and
deterministic for any stride.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from .tensor import node


def _patch_view(x, k, stride):
    n, c, h, w = x.shape
    ho = (h - k) // stride + 1
    wo = (w - k) // stride + 1
    sn, sc, sh, sw = x.strides
    return np.lib.stride_tricks.as_strided(
        x,
        shape=(n, c, k, k, ho, wo),
        strides=(sn, sc, sh, sw, sh * stride, sw * stride),
        writeable=False,
    )


def conv2d(x, kernel, bias=None, stride=1, padding=0):
    """Cross-correlate (N, Ci, H, W) with (Co, Ci, k, k) plus per-channel bias.

    H' = floor((H + 2*padding - k) / stride) + 1, same for W'.  Gradients are
    defined w.r.t. input, kernel and bias.
    """
    if x.ndim != 4 or kernel.ndim != 4:
        raise ShapeError("conv2d expects 4-d input and kernel, got %r / %r" % (x.shape, kernel.shape))
    n, ci, h, w = x.shape
    co, ci_k, kh, kw = kernel.shape
    if kh != kw:
        raise ShapeError("conv2d kernels must be square, got %r" % (kernel.shape,))
    if ci != ci_k:
        raise ShapeError("input has %d channels, kernel expects %d" % (ci, ci_k))
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise ShapeError("spatial size %dx%d too small for kernel %d" % (h, w, kh))
    if bias is not None and bias.shape != (co,):
        raise ShapeError("bias shape %r does not match %d output channels" % (bias.shape, co))

    k = kh
    xp = x.data
    if padding:
        xp = np.pad(xp, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    hp, wp = xp.shape[2], xp.shape[3]
    ho = (hp - k) // stride + 1
    wo = (wp - k) // stride + 1

    # im2col: one copy reused by forward and both weight/input adjoints
    cols = np.ascontiguousarray(_patch_view(xp, k, stride).transpose(1, 2, 3, 0, 4, 5))
    cols = cols.reshape(ci * k * k, n * ho * wo)
    w2 = kernel.data.reshape(co, ci * k * k)
    out = (w2 @ cols).reshape(co, n, ho, wo).transpose(1, 0, 2, 3)
    out = np.ascontiguousarray(out)
    if bias is not None:
        out += bias.data.reshape(1, -1, 1, 1)

    def backward(g):
        grad_kernel = None
        grad_input = None
        grad_bias = None
        g2 = np.ascontiguousarray(g.transpose(1, 0, 2, 3)).reshape(co, n * ho * wo)
        if kernel.requires_grad:
            grad_kernel = (g2 @ cols.T).reshape(kernel.shape)
        if x.requires_grad:
            cg = (w2.T @ g2).reshape(ci, k, k, n, ho, wo)
            gx = np.zeros_like(xp)
            for i in range(k):
                for j in range(k):
                    gx[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += cg[
                        :, i, j
                    ].transpose(1, 0, 2, 3)
            if padding:
                gx = gx[:, :, padding : padding + h, padding : padding + w]
            grad_input = gx
        if bias is not None and bias.requires_grad:
            grad_bias = g.sum(axis=(0, 2, 3))
        return (grad_input, grad_kernel, grad_bias)

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    if bias is None:
        return node(out, parents, lambda g: backward(g)[:2])
    return node(out, parents, backward)
