"""Network building blocks: the 6-layer conv block and the discriminator.

Each block registers its weights in a shared ``Parameters`` store under a
name prefix, so checkpointing, optimization and parameter counting all see
one flat namespace.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import engine
from .engine import BatchNormState, Tensor, activation, batch_norm, conv2d, leaky_relu, reduce_mean, reshape, sigmoid
from .errors import ShapeError


class Parameters:
    """Ordered name -> Tensor map of trainable weights."""

    def __init__(self, dtype=np.float64):
        self.dtype = np.dtype(dtype)
        self._store = {}

    def add(self, name, shape):
        if name in self._store:
            raise KeyError("duplicate parameter %r" % name)
        t = Tensor(np.zeros(shape, dtype=self.dtype), requires_grad=True)
        self._store[name] = t
        return t

    def __getitem__(self, name):
        return self._store[name]

    def __contains__(self, name):
        return name in self._store

    def __len__(self):
        return len(self._store)

    def names(self):
        return list(self._store)

    def tensors(self):
        return list(self._store.values())

    def items(self):
        return self._store.items()

    def count(self):
        return sum(t.size for t in self._store.values())

    def zero_grad(self):
        for t in self._store.values():
            t.grad = None

    def state_arrays(self):
        return {name: t.data for name, t in self._store.items()}

    def load_state(self, arrays):
        missing = set(self._store) - set(arrays)
        extra = set(arrays) - set(self._store)
        if missing or extra:
            raise KeyError("parameter name mismatch: missing=%s extra=%s" % (sorted(missing), sorted(extra)))
        for name, t in self._store.items():
            arr = np.asarray(arrays[name], dtype=t.dtype)
            if arr.shape != t.shape:
                raise ShapeError("parameter %r shape %r != stored %r" % (name, t.shape, arr.shape))
            t.data = arr.copy()

    def snapshot(self):
        return {name: t.data.copy() for name, t in self._store.items()}


def orthogonal_matrix(rows, cols, gain, rng):
    """Random matrix with orthonormal rows (or columns if rows > cols), scaled by gain."""
    big, small = max(rows, cols), min(rows, cols)
    a = rng.standard_normal((big, small))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))  # fix sign ambiguity for a uniform, seed-stable draw
    if rows <= cols:
        return gain * q.T
    return gain * q


def init_conv_orthogonal(weight, rng, gain=np.sqrt(2.0)):
    co = weight.shape[0]
    fan = int(np.prod(weight.shape[1:]))
    w = orthogonal_matrix(co, fan, gain, rng).reshape(weight.shape)
    weight.data = w.astype(weight.dtype)


def init_conv_normal(weight, rng, std=0.01):
    weight.data = (rng.standard_normal(weight.shape) * std).astype(weight.dtype)


@dataclass(frozen=True)
class ConvBlockSpec:
    """6-layer conv stack: (n_in->width, ReLU), (width->width, ReLU) x (depth-2), (width->n_out, final)."""

    n_in: int
    n_out: int
    width: int = 32
    depth: int = 6
    kernel: int = 3
    final_activation: str = "tanh"

    def layer_channels(self):
        chans = [(self.n_in, self.width)]
        chans += [(self.width, self.width)] * (self.depth - 2)
        chans += [(self.width, self.n_out)]
        return chans

    def param_count(self):
        return sum((ci * self.kernel * self.kernel + 1) * co for ci, co in self.layer_channels())


class ConvBlock:
    """Stride-1, size-preserving conv stack built from a ConvBlockSpec."""

    def __init__(self, spec, params, prefix):
        self.spec = spec
        self.prefix = prefix
        self.weights = []
        self.biases = []
        k = spec.kernel
        for i, (ci, co) in enumerate(spec.layer_channels(), start=1):
            self.weights.append(params.add("%s.conv%d.weight" % (prefix, i), (co, ci, k, k)))
            self.biases.append(params.add("%s.conv%d.bias" % (prefix, i), (co,)))

    def initialize(self, rng):
        """Orthogonal (gain sqrt 2) everywhere except the final layer, which is
        drawn from Normal(0, 0.01^2) to start the block's output near zero;
        biases stay zero."""
        for w in self.weights[:-1]:
            init_conv_orthogonal(w, rng)
        init_conv_normal(self.weights[-1], rng)
        for b in self.biases:
            b.data = np.zeros_like(b.data)

    def __call__(self, x):
        pad = (self.spec.kernel - 1) // 2
        h = x
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = engine.relu(conv2d(h, w, b, stride=1, padding=pad))
        h = conv2d(h, self.weights[-1], self.biases[-1], stride=1, padding=pad)
        return activation(h, self.spec.final_activation)


@dataclass(frozen=True)
class DiscriminatorSpec:
    """Real/interpolated frame classifier: an un-normalized entry conv, then
    conv+batchnorm+leaky-relu blocks with alternating strides of 2 and 1,
    doubling features at each stride-2 block, followed by global average
    pooling, an affine map to one logit, and a sigmoid."""

    initial_filters: int = 32
    block_count: int = 8
    kernel: int = 3
    leak: float = 0.2

    def block_channels(self):
        chans = []
        c = self.initial_filters
        for i in range(self.block_count):
            stride = 2 if i % 2 == 0 else 1
            c_out = c * 2 if stride == 2 else c
            chans.append((c, c_out, stride))
            c = c_out
        return chans

    def spatial_reduction(self):
        return 2 ** sum(1 for _, _, s in self.block_channels() if s == 2)

    def param_count(self):
        k = self.kernel
        total = (3 * k * k + 1) * self.initial_filters
        for ci, co, _ in self.block_channels():
            total += (ci * k * k + 1) * co + 2 * co  # conv + bn scale/shift
        total += self.block_channels()[-1][1] + 1  # affine head
        return total


class Discriminator:
    def __init__(self, spec, params, prefix="disc"):
        self.spec = spec
        self.prefix = prefix
        self.store = params
        k = spec.kernel
        self.entry_w = params.add("%s.entry.weight" % prefix, (spec.initial_filters, 3, k, k))
        self.entry_b = params.add("%s.entry.bias" % prefix, (spec.initial_filters,))
        self.blocks = []
        self.bn_states = {}
        for i, (ci, co, stride) in enumerate(spec.block_channels(), start=1):
            w = params.add("%s.block%d.weight" % (prefix, i), (co, ci, k, k))
            b = params.add("%s.block%d.bias" % (prefix, i), (co,))
            scale = params.add("%s.block%d.bn.scale" % (prefix, i), (co,))
            shift = params.add("%s.block%d.bn.shift" % (prefix, i), (co,))
            state = BatchNormState(co, dtype=params.dtype)
            self.bn_states["%s.block%d" % (prefix, i)] = state
            self.blocks.append((w, b, scale, shift, state, stride))
        c_last = spec.block_channels()[-1][1]
        self.head_w = params.add("%s.head.weight" % prefix, (1, c_last, 1, 1))
        self.head_b = params.add("%s.head.bias" % prefix, (1,))

    def initialize(self, rng):
        init_conv_orthogonal(self.entry_w, rng)
        self.entry_b.data = np.zeros_like(self.entry_b.data)
        for w, b, scale, shift, _, _ in self.blocks:
            init_conv_orthogonal(w, rng)
            b.data = np.zeros_like(b.data)
            scale.data = np.ones_like(scale.data)
            shift.data = np.zeros_like(shift.data)
        # near-zero head keeps initial outputs close to 0.5
        init_conv_normal(self.head_w, rng)
        self.head_b.data = np.zeros_like(self.head_b.data)

    def buffers(self):
        out = {}
        for name, state in self.bn_states.items():
            out["%s.bn.mean" % name] = state.running_mean
            out["%s.bn.var" % name] = state.running_var
        return out

    def load_buffers(self, arrays):
        for name, state in self.bn_states.items():
            state.running_mean[:] = arrays["%s.bn.mean" % name]
            state.running_var[:] = arrays["%s.bn.var" % name]

    def __call__(self, x, training=False, update_stats=True):
        """Map (N, 3, H, W) frames to per-sample real-frame probabilities in (0, 1)."""
        red = self.spec.spatial_reduction()
        _, c, h, w = x.shape
        if c != 3:
            raise ShapeError("discriminator expects 3-channel frames, got %d" % c)
        if h % red or w % red:
            raise ShapeError("discriminator input %dx%d must be divisible by %d" % (h, w, red))
        pad = (self.spec.kernel - 1) // 2
        h_t = leaky_relu(conv2d(x, self.entry_w, self.entry_b, stride=1, padding=pad), self.spec.leak)
        for wgt, b, scale, shift, state, stride in self.blocks:
            h_t = conv2d(h_t, wgt, b, stride=stride, padding=pad)
            h_t = batch_norm(h_t, scale, shift, state, training=training, update_stats=update_stats)
            h_t = leaky_relu(h_t, self.spec.leak)
        pooled = reduce_mean(h_t, axis=(2, 3), keepdims=True)
        logit = conv2d(pooled, self.head_w, self.head_b, stride=1, padding=0)
        return sigmoid(reshape(logit, (x.shape[0],)))
