"""Differentiable warping, voxel-flow synthesis and the coarse-to-fine pyramid.

Flow lives in normalized coordinates: a value of 1.0 displaces by one full
image width/height.  That convention makes the per-level features scale-free,
so upsampled coarse features feed finer levels without magnitude rescaling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blocks import ConvBlock, ConvBlockSpec, Parameters
from .engine import Tensor, concat, narrow, neg, pad_reflect, tanh, upsample2x, downsample2x, crop2d
from .engine.tensor import node
from .errors import ContractError, ShapeError
from .metrics import ArchitectureSpec


def warp(image, flow):
    """Bilinearly sample ``image`` at positions displaced by ``flow``.

    image: (N, C, H, W); flow: (N, 2, H, W) with channels (u, v) in
    normalized units.  Samples are taken at (x + u*W, y + v*H) and clamp to
    the border; the op is differentiable w.r.t. both image and flow (the
    flow gradient vanishes where sampling is clamped).
    """
    if image.ndim != 4 or flow.ndim != 4 or flow.shape[1] != 2:
        raise ShapeError("warp expects image (N,C,H,W) and flow (N,2,H,W); got %r / %r" % (image.shape, flow.shape))
    if image.shape[0] != flow.shape[0] or image.shape[2:] != flow.shape[2:]:
        raise ShapeError("image %r and flow %r disagree" % (image.shape, flow.shape))

    n, c, h, w = image.shape
    img = image.data
    u = flow.data[:, 0]
    v = flow.data[:, 1]
    ys, xs = np.meshgrid(np.arange(h, dtype=img.dtype), np.arange(w, dtype=img.dtype), indexing="ij")
    sx = xs[None] + u * w
    sy = ys[None] + v * h

    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = (sx - x0).astype(img.dtype)
    fy = (sy - y0).astype(img.dtype)
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)

    flat = img.reshape(n, c, h * w)

    def gather(yy, xx):
        idx = (yy * w + xx).reshape(n, 1, h * w)
        return np.take_along_axis(flat, idx, axis=2).reshape(n, c, h, w)

    v00 = gather(y0c, x0c)
    v01 = gather(y0c, x1c)
    v10 = gather(y1c, x0c)
    v11 = gather(y1c, x1c)

    w00 = ((1 - fy) * (1 - fx))[:, None]
    w01 = ((1 - fy) * fx)[:, None]
    w10 = (fy * (1 - fx))[:, None]
    w11 = (fy * fx)[:, None]
    out = w00 * v00 + w01 * v01 + w10 * v10 + w11 * v11

    def backward(g):
        grad_img = None
        grad_flow = None
        if image.requires_grad:
            grad_img = np.zeros(n * c * h * w, dtype=img.dtype)
            plane = (np.arange(n * c) * (h * w)).reshape(n, c, 1, 1)
            for yy, xx, wk in ((y0c, x0c, w00), (y0c, x1c, w01), (y1c, x0c, w10), (y1c, x1c, w11)):
                idx = (plane + (yy * w + xx)[:, None]).reshape(-1)
                grad_img += np.bincount(idx, weights=(g * wk).reshape(-1), minlength=grad_img.size)
            grad_img = grad_img.reshape(n, c, h, w).astype(img.dtype)
        if flow.requires_grad:
            dx = ((1 - fy)[:, None] * (v01 - v00) + fy[:, None] * (v11 - v10)) * g
            dy = ((1 - fx)[:, None] * (v10 - v00) + fx[:, None] * (v11 - v01)) * g
            grad_flow = np.stack((dx.sum(axis=1) * w, dy.sum(axis=1) * h), axis=1)
        return (grad_img, grad_flow)

    return node(out, (image, flow), backward)


def split_features(gamma):
    """Split (N, 3, H, W) synthesis features into flow (u, v) and the raw occlusion channel."""
    if gamma.shape[1] != 3:
        raise ShapeError("synthesis features need 3 channels, got %d" % gamma.shape[1])
    return narrow(gamma, 1, 0, 2), narrow(gamma, 1, 2, 3)


def synthesize(i0, i1, gamma):
    """Blend the two warped source frames into the middle frame.

    The occlusion channel is remapped from [-1, 1] to a weight W in [0, 1];
    the output is W * warp(i0, -flow) + (1 - W) * warp(i1, +flow), so all-zero
    features reduce to the frame average.
    """
    if i0.shape != i1.shape:
        raise ShapeError("source frames disagree: %r vs %r" % (i0.shape, i1.shape))
    if i0.shape[2:] != gamma.shape[2:] or i0.shape[0] != gamma.shape[0]:
        raise ShapeError("features %r do not match frames %r" % (gamma.shape, i0.shape))
    flow, w_raw = split_features(gamma)
    weight = (w_raw + 1.0) * 0.5
    back = warp(i0, neg(flow))
    fwd = warp(i1, flow)
    return weight * back + (1.0 - weight) * fwd


def estimate_pyramid(i0, i1, coarse_block, residual_blocks):
    """Coarse-to-fine feature estimation.

    The coarsest level runs the coarse block on the 2^J-downsampled frame
    pair; each finer level warps its downsampled frames with the upsampled
    coarser flow, predicts a residual, and re-squashes the sum with tanh.
    Returns features per level, finest first, at their native resolutions.
    """
    levels = len(residual_blocks) + 1
    _, _, h, w = i0.shape
    div = 2 ** levels
    if h % div or w % div:
        raise ShapeError("input %dx%d must be divisible by %d (pad first)" % (h, w, div))
    down0 = [i0]
    down1 = [i1]
    for _ in range(levels):
        down0.append(downsample2x(down0[-1]))
        down1.append(downsample2x(down1[-1]))

    gamma = coarse_block(concat((down0[levels], down1[levels]), axis=1))
    per_level = {levels: gamma}
    for j in range(levels - 1, 0, -1):
        up_gamma = upsample2x(gamma)
        flow, _ = split_features(up_gamma)
        warped0 = warp(down0[j], neg(flow))
        warped1 = warp(down1[j], flow)
        residual = residual_blocks[levels - 1 - j](concat((warped0, warped1, up_gamma), axis=1))
        gamma = tanh(up_gamma + residual)
        per_level[j] = gamma
    return [per_level[j] for j in range(1, levels + 1)]


@dataclass
class InterpolationOutput:
    """Everything a forward pass produces, for supervision and inspection.

    ``frame`` is the unclamped prediction used by losses (the refined frame
    when refinement runs, the finest synthesis otherwise); ``display_frame``
    clamps to [0, 1] for writing out.
    """

    frame: Tensor
    scale_frames: list  # finest first; all at full input resolution
    features: Tensor  # finest features upsampled to full resolution
    scale_features: list  # per-level features at native resolutions, finest first
    refined: Tensor | None = None

    @property
    def levels(self):
        return len(self.scale_frames)

    def display_frame(self):
        return np.clip(self.frame.data, 0.0, 1.0)


class Interpolator:
    """The full middle-frame model: pyramid blocks plus optional refinement."""

    def __init__(self, arch=None, dtype=np.float64):
        if arch is None:
            arch = ArchitectureSpec("ms")
        if arch.kind == "baseline":
            raise ContractError("the baseline stack is accounting-only and cannot be instantiated")
        self.arch = arch
        self.params = Parameters(dtype=dtype)
        c, f = arch.color_channels, arch.flow_channels
        self.coarse = ConvBlock(
            ConvBlockSpec(2 * c, f, arch.width, arch.depth, arch.kernel, "tanh"),
            self.params,
            "coarse",
        )
        self.residuals = [
            ConvBlock(
                ConvBlockSpec(2 * c + f, f, arch.width, arch.depth, arch.kernel, "tanh"),
                self.params,
                "residual%d" % j,
            )
            for j in range(arch.levels - 1, 0, -1)
        ]
        self.refine = None
        if arch.refinement:
            self.refine = ConvBlock(
                ConvBlockSpec(3 * c, c, arch.width, arch.depth, arch.kernel, "identity"),
                self.params,
                "refine",
            )

    def initialize(self, seed):
        rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
        self.coarse.initialize(rng)
        for block in self.residuals:
            block.initialize(rng)
        if self.refine is not None:
            self.refine.initialize(rng)
        return self

    def interpolate(self, i0, i1):
        """Full forward pass; returns all intermediates.

        Frames must be normalized to [0, 1].  Sizes not divisible by 2^levels
        are reflection-padded up and every produced frame is cropped back.
        """
        if not isinstance(i0, Tensor):
            i0 = Tensor(np.asarray(i0, dtype=self.params.dtype))
        if not isinstance(i1, Tensor):
            i1 = Tensor(np.asarray(i1, dtype=self.params.dtype))
        if i0.shape != i1.shape:
            raise ShapeError("input frames disagree: %r vs %r" % (i0.shape, i1.shape))
        _, _, h, w = i0.shape
        div = 2 ** self.arch.levels
        pad_b = (-h) % div
        pad_r = (-w) % div
        padded = bool(pad_b or pad_r)
        p0, p1 = i0, i1
        if padded:
            p0 = pad_reflect(i0, (0, pad_b, 0, pad_r))
            p1 = pad_reflect(i1, (0, pad_b, 0, pad_r))

        per_level = estimate_pyramid(p0, p1, self.coarse, self.residuals)
        scale_frames = []
        scale_features = per_level
        full_features = None
        for j, gamma in enumerate(per_level, start=1):
            lifted = gamma
            for _ in range(j):
                lifted = upsample2x(lifted)
            if j == 1:
                full_features = lifted
            scale_frames.append(synthesize(p0, p1, lifted))

        frame = scale_frames[0]
        refined = None
        if self.refine is not None:
            refined = self.refine(concat((frame, p0, p1), axis=1))
            out_frame = refined
        else:
            out_frame = frame

        if padded:
            out_frame = crop2d(out_frame, 0, 0, h, w)
            scale_frames = [crop2d(f, 0, 0, h, w) for f in scale_frames]
            full_features = crop2d(full_features, 0, 0, h, w)
            if refined is not None:
                refined = crop2d(refined, 0, 0, h, w)
        return InterpolationOutput(
            frame=out_frame,
            scale_frames=scale_frames,
            features=full_features,
            scale_features=scale_features,
            refined=refined,
        )

    def __call__(self, i0, i1):
        return self.interpolate(i0, i1)
