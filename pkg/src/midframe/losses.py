"""Training objectives: per-scale synthesis, refinement, perceptual, adversarial.

Norms are realized as per-element means so magnitudes do not depend on crop
size; the lambda weights below are calibrated against that convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .blocks import init_conv_orthogonal
from .engine import Tensor, clip, conv2d, log, mean_abs_error, mean_squared_error, neg, reduce_mean, relu
from .errors import ContractError, ShapeError

GAN_MODES = ("off", "minimax", "non_saturating")
PROB_CLAMP = 1e-7


class FeatureExtractor:
    """Fixed random-feature perceptual map: a seeded, orthogonally initialized
    4-level strided conv stack.  Weights never train; pretrained features may
    be substituted through the checkpoint loader if available."""

    CHANNELS = (3, 16, 32, 64, 64)

    def __init__(self, seed=0, kernel=3, dtype=np.float64):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x7EA]))
        self.kernel = kernel
        self.weights = []
        self.biases = []
        for ci, co in zip(self.CHANNELS[:-1], self.CHANNELS[1:]):
            w = Tensor(np.zeros((co, ci, kernel, kernel), dtype=dtype))
            init_conv_orthogonal(w, rng)
            self.weights.append(w)
            self.biases.append(Tensor(np.zeros(co, dtype=dtype)))

    def __call__(self, x):
        pad = (self.kernel - 1) // 2
        h = x
        for w, b in zip(self.weights, self.biases):
            h = relu(conv2d(h, w, b, stride=2, padding=pad))
        return h

    def load_weights(self, arrays):
        for i, w in enumerate(self.weights):
            w.data = np.asarray(arrays["features.conv%d.weight" % (i + 1)], dtype=w.dtype)
        for i, b in enumerate(self.biases):
            b.data = np.asarray(arrays["features.conv%d.bias" % (i + 1)], dtype=b.dtype)


@dataclass
class LossConfig:
    perceptual_weight: float = 0.001
    finest_scale_weight: float = 1.0
    coarse_scale_weight: float = 0.5
    adversarial_weight: float = 0.0001
    gan_mode: str = "off"
    feature_extractor: FeatureExtractor | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.gan_mode not in GAN_MODES:
            raise ContractError("gan_mode must be one of %r" % (GAN_MODES,))
        for w in (self.perceptual_weight, self.finest_scale_weight, self.coarse_scale_weight, self.adversarial_weight):
            if w < 0:
                raise ContractError("loss weights must be non-negative")

    def scale_weight(self, j):
        return self.finest_scale_weight if j == 1 else self.coarse_scale_weight


def distance(a, b, config):
    """Mean absolute error plus the weighted perceptual feature distance."""
    if a.shape != b.shape:
        raise ShapeError("distance shapes differ: %r vs %r" % (a.shape, b.shape))
    pixel = mean_abs_error(a, b)
    extractor = config.feature_extractor
    if config.perceptual_weight == 0.0 or extractor is None:
        return pixel, pixel, None
    perceptual = mean_squared_error(extractor(a), extractor(b))
    total = pixel + config.perceptual_weight * perceptual
    return total, pixel, perceptual


def tau(a, b, config):
    total, _, _ = distance(a, b, config)
    return total


def multi_scale_loss(outputs, target, config):
    """Weighted sum of the per-scale synthesis distances (finest weighted 1.0,
    coarser scales 0.5 by default)."""
    if not outputs.scale_frames:
        raise ContractError("interpolation output carries no scale frames")
    total = None
    for j, frame in enumerate(outputs.scale_frames, start=1):
        term = config.scale_weight(j) * tau(frame, target, config)
        total = term if total is None else total + term
    return total


def total_loss(outputs, target, config, generator_gan_term=None):
    """Multi-scale loss, plus the refinement distance when the refined frame
    is present, plus the weighted generator adversarial term when GAN mode is
    on.  Returns (scalar Tensor, per-component float breakdown); breakdown
    columns sum to the total."""
    parts = {}
    perceptual_total = 0.0
    total = None
    for j, frame in enumerate(outputs.scale_frames, start=1):
        w = config.scale_weight(j)
        full, pixel, perceptual = distance(frame, target, config)
        term = w * full
        total = term if total is None else total + term
        parts["syn%d" % j] = w * float(pixel.data)
        if perceptual is not None:
            perceptual_total += w * config.perceptual_weight * float(perceptual.data)
    if outputs.refined is not None:
        full, pixel, perceptual = distance(outputs.refined, target, config)
        total = total + full
        parts["refine"] = float(pixel.data)
        if perceptual is not None:
            perceptual_total += config.perceptual_weight * float(perceptual.data)
    else:
        parts["refine"] = 0.0
    parts["perceptual"] = perceptual_total
    if config.gan_mode != "off":
        if generator_gan_term is None:
            raise ContractError("gan_mode=%s requires a generator adversarial term" % config.gan_mode)
        total = total + config.adversarial_weight * generator_gan_term
        parts["gan_g"] = config.adversarial_weight * float(generator_gan_term.data)
    else:
        parts["gan_g"] = 0.0
    parts["total"] = float(total.data)
    return total, parts


def _check_probabilities(name, t):
    if np.any(t.data <= 0.0) or np.any(t.data >= 1.0):
        raise ContractError("%s probabilities must lie strictly in (0, 1) before clamping" % name)


def gan_losses(d_real, d_fake, mode="non_saturating"):
    """Discriminator and generator objectives from probability outputs.

    Probabilities are clamped away from {0, 1} by 1e-7 before the logs.  The
    minimax generator term is the literal saturating form mean(log(1-d_fake));
    non_saturating uses -mean(log d_fake).
    """
    if mode not in ("minimax", "non_saturating"):
        raise ContractError("gan mode must be minimax or non_saturating, got %r" % (mode,))
    _check_probabilities("d_real", d_real)
    _check_probabilities("d_fake", d_fake)
    real = clip(d_real, PROB_CLAMP, 1.0 - PROB_CLAMP)
    fake = clip(d_fake, PROB_CLAMP, 1.0 - PROB_CLAMP)
    d_loss = neg(reduce_mean(log(real))) + neg(reduce_mean(log(1.0 - fake)))
    return d_loss, generator_gan_loss(d_fake, mode)


def generator_gan_loss(d_fake, mode="non_saturating"):
    """Just the generator-side adversarial term from fake-sample probabilities."""
    if mode not in ("minimax", "non_saturating"):
        raise ContractError("gan mode must be minimax or non_saturating, got %r" % (mode,))
    _check_probabilities("d_fake", d_fake)
    fake = clip(d_fake, PROB_CLAMP, 1.0 - PROB_CLAMP)
    if mode == "minimax":
        return reduce_mean(log(1.0 - fake))
    return neg(reduce_mean(log(fake)))
