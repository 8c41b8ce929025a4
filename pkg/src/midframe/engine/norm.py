"""Per-channel batch normalization with running statistics."""

from __future__ import annotations

import numpy as np

from ..errors import DegenerateVarianceError, ShapeError
from .tensor import node


class BatchNormState:
    """Running mean/variance buffers for one normalization layer.

    Buffers are mutated in place so external references (checkpointing)
    stay current.
    """

    def __init__(self, channels, momentum=0.9, eps=1e-5, dtype=np.float64):
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.momentum = momentum
        self.eps = eps

    def update(self, mean, var):
        m = self.momentum
        self.running_mean[:] = m * self.running_mean + (1.0 - m) * mean
        self.running_var[:] = m * self.running_var + (1.0 - m) * var


def batch_norm(x, scale, shift, state, training, update_stats=True):
    """Normalize (N, C, H, W) per channel, then apply scale and shift.

    Train mode uses batch statistics (and optionally updates the running
    buffers); eval mode uses the running buffers.  Gradients flow through
    the batch statistics in train mode.
    """
    if x.ndim != 4:
        raise ShapeError("batch_norm expects 4-d input, got %r" % (x.shape,))
    n, c, h, w = x.shape
    if scale.shape != (c,) or shift.shape != (c,):
        raise ShapeError("scale/shift must have shape (%d,)" % c)

    if not training:
        inv = 1.0 / np.sqrt(state.running_var + state.eps)
        xhat = (x.data - state.running_mean.reshape(1, -1, 1, 1)) * inv.reshape(1, -1, 1, 1)
        out = xhat * scale.data.reshape(1, -1, 1, 1) + shift.data.reshape(1, -1, 1, 1)

        def backward_eval(g):
            gx = g * (scale.data * inv).reshape(1, -1, 1, 1) if x.requires_grad else None
            gs = (g * xhat).sum(axis=(0, 2, 3)) if scale.requires_grad else None
            gb = g.sum(axis=(0, 2, 3)) if shift.requires_grad else None
            return (gx, gs, gb)

        return node(out.astype(x.dtype, copy=False), (x, scale, shift), backward_eval)

    m = n * h * w
    if m < 2:
        raise DegenerateVarianceError("train-mode batch_norm needs >= 2 elements per channel, got %d" % m)
    mean = x.data.mean(axis=(0, 2, 3))
    var = x.data.var(axis=(0, 2, 3))
    if update_stats:
        state.update(mean, var)
    inv = 1.0 / np.sqrt(var + state.eps)
    centered = x.data - mean.reshape(1, -1, 1, 1)
    xhat = centered * inv.reshape(1, -1, 1, 1)
    out = xhat * scale.data.reshape(1, -1, 1, 1) + shift.data.reshape(1, -1, 1, 1)

    def backward(g):
        gs = (g * xhat).sum(axis=(0, 2, 3)) if scale.requires_grad else None
        gb = g.sum(axis=(0, 2, 3)) if shift.requires_grad else None
        gx = None
        if x.requires_grad:
            gxhat = g * scale.data.reshape(1, -1, 1, 1)
            sum_g = gxhat.sum(axis=(0, 2, 3), keepdims=True)
            sum_gx = (gxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
            gx = (inv.reshape(1, -1, 1, 1) / m) * (m * gxhat - sum_g - xhat * sum_gx)
        return (gx, gs, gb)

    return node(out.astype(x.dtype, copy=False), (x, scale, shift), backward)
