"""Reconstruction quality (PSNR) and analytic complexity accounting.

FLOPs per convolution are approximated as H * W * n_out * (2 * n_in * k^2 + 2)
at the layer's operating resolution; warping and resampling stages are
excluded from the count.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ContractError, ShapeError

PSNR_CAP_DB = 100.0


def psnr(a, b, cap=PSNR_CAP_DB):
    """10*log10(1/MSE) for frames nominally in [0, 1]; identical inputs hit the cap."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError("psnr shapes differ: %r vs %r" % (a.shape, b.shape))
    mse = float(np.mean((a - b) ** 2))
    if mse <= 0.0:
        return cap
    return min(cap, 10.0 * np.log10(1.0 / mse))


def frame_average(a, b):
    """The no-motion reference interpolator: plain mean of the two frames."""
    return 0.5 * (np.asarray(a, dtype=np.float64) + np.asarray(b, dtype=np.float64))


@dataclass(frozen=True)
class LayerCost:
    module: str
    n_in: int
    n_out: int
    kernel: int
    scale_div: int  # operating resolution is (H/scale_div, W/scale_div)

    def params(self):
        return (self.n_in * self.kernel * self.kernel + 1) * self.n_out

    def flops(self, height, width):
        h = height // self.scale_div
        w = width // self.scale_div
        return h * w * self.n_out * (2 * self.n_in * self.kernel * self.kernel + 2)


@dataclass(frozen=True)
class ArchitectureSpec:
    """Declarative model description driving both execution and accounting.

    kind "ms" is the flow pyramid, "ms-refine" adds the synthesis refinement
    block, "baseline" is the plain single-scale conv stack (accounting only).
    """

    kind: str = "ms"
    levels: int = 3
    width: int = 32
    depth: int = 6
    kernel: int = 3
    baseline_layers: int = 15
    include_discriminator: bool = False
    color_channels: int = 3
    flow_channels: int = 3

    def __post_init__(self):
        if self.kind not in ("ms", "ms-refine", "baseline"):
            raise ContractError("unknown architecture kind %r" % (self.kind,))
        if self.kind != "baseline" and self.levels < 1:
            raise ContractError("pyramid needs at least one level")

    @property
    def refinement(self):
        return self.kind == "ms-refine"

    def _block_layers(self, module, n_in, n_out, scale_div):
        layers = [LayerCost(module, n_in, self.width, self.kernel, scale_div)]
        layers += [LayerCost(module, self.width, self.width, self.kernel, scale_div)] * (self.depth - 2)
        layers += [LayerCost(module, self.width, n_out, self.kernel, scale_div)]
        return layers

    def conv_layers(self):
        """Every generator conv layer with its operating-resolution divisor."""
        c = self.color_channels
        f = self.flow_channels
        if self.kind == "baseline":
            layers = [LayerCost("baseline", 2 * c, self.width, self.kernel, 1)]
            layers += [LayerCost("baseline", self.width, self.width, self.kernel, 1)] * (self.baseline_layers - 2)
            layers += [LayerCost("baseline", self.width, c, self.kernel, 1)]
            return layers
        layers = self._block_layers("coarse(x%d)" % 2 ** self.levels, 2 * c, f, 2 ** self.levels)
        for j in range(self.levels - 1, 0, -1):
            layers += self._block_layers("residual(x%d)" % 2 ** j, 2 * c + f, f, 2 ** j)
        if self.refinement:
            layers += self._block_layers("refine(x1)", 3 * c, c, 1)
        return layers

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class ComplexityReport:
    arch: str
    height: int
    width: int
    total_flops: int
    flops_by_module: dict = field(default_factory=dict)
    total_params: int = 0
    params_by_module: dict = field(default_factory=dict)

    def rows(self):
        out = []
        for module in self.flops_by_module:
            out.append((module, self.params_by_module.get(module, 0), self.flops_by_module[module]))
        return out

    def as_text(self):
        lines = [
            "architecture: %s  (input %dx%d)" % (self.arch, self.height, self.width),
            "%-16s %12s %16s" % ("module", "params", "flops"),
        ]
        for module, params, flops in self.rows():
            lines.append("%-16s %12d %16d" % (module, params, flops))
        lines.append("%-16s %12d %16d" % ("total", self.total_params, self.total_flops))
        return "\n".join(lines)


def _discriminator_costs(spec):
    from .blocks import DiscriminatorSpec

    d = DiscriminatorSpec()
    layers = [LayerCost("discriminator", 3, d.initial_filters, d.kernel, 1)]
    div = 1
    for ci, co, stride in d.block_channels():
        layers.append(LayerCost("discriminator", ci, co, d.kernel, div))
        div *= stride
    head_params = d.block_channels()[-1][1] + 1 + 2 * sum(co for _, co, _ in d.block_channels())
    return layers, head_params


def count_params(spec):
    """Exact trainable scalar count (weights and biases; BN scale/shift for the discriminator)."""
    total = sum(layer.params() for layer in spec.conv_layers())
    if spec.include_discriminator:
        layers, extra = _discriminator_costs(spec)
        total += sum(l.params() for l in layers) + extra
    return total


def count_flops(spec, height, width):
    """Sum the per-convolution FLOPs approximation over every generator layer."""
    div = 2 ** spec.levels if spec.kind != "baseline" else 1
    if height % div or width % div:
        raise ShapeError("input %dx%d not divisible by %d" % (height, width, div))
    flops_by = {}
    params_by = {}
    for layer in spec.conv_layers():
        flops_by[layer.module] = flops_by.get(layer.module, 0) + layer.flops(height, width)
        params_by[layer.module] = params_by.get(layer.module, 0) + layer.params()
    if spec.include_discriminator:
        layers, extra = _discriminator_costs(spec)
        for layer in layers:
            flops_by[layer.module] = flops_by.get(layer.module, 0) + layer.flops(height, width)
            params_by[layer.module] = params_by.get(layer.module, 0) + layer.params()
        params_by["discriminator"] += extra
    return ComplexityReport(
        arch=spec.kind,
        height=height,
        width=width,
        total_flops=sum(flops_by.values()),
        flops_by_module=flops_by,
        total_params=sum(params_by.values()),
        params_by_module=params_by,
    )
