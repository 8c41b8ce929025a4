"""Middle-frame interpolation with a coarse-to-fine flow pyramid.

A self-contained differentiable engine (numpy-backed reverse-mode autodiff),
the interpolation networks built on it, training losses including
adversarial terms, a training loop, synthetic-motion data tooling, and
analytic complexity accounting.
"""

__version__ = "0.1.0"
