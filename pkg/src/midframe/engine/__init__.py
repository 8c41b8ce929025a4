"""Deterministic n-d array engine with reverse-mode automatic differentiation."""

from .tensor import (
    Tensor,
    no_grad,
    grad_enabled,
    constant,
    add,
    sub,
    mul,
    neg,
    concat,
    narrow,
    reshape,
    clip,
    absolute,
    square,
    log,
    reduce_sum,
    reduce_mean,
    relu,
    leaky_relu,
    tanh,
    sigmoid,
    activation,
    mean_abs_error,
    mean_squared_error,
    pad_reflect,
    crop2d,
)
from .conv import conv2d
from .resize import downsample2x, upsample2x, bilinear_resize
from .norm import BatchNormState, batch_norm
from .gradcheck import CheckReport, finite_diff_check

__all__ = [
    "Tensor",
    "no_grad",
    "grad_enabled",
    "constant",
    "add",
    "sub",
    "mul",
    "neg",
    "concat",
    "narrow",
    "reshape",
    "clip",
    "absolute",
    "square",
    "log",
    "reduce_sum",
    "reduce_mean",
    "relu",
    "leaky_relu",
    "tanh",
    "sigmoid",
    "activation",
    "mean_abs_error",
    "mean_squared_error",
    "pad_reflect",
    "crop2d",
    "conv2d",
    "downsample2x",
    "upsample2x",
    "bilinear_resize",
    "BatchNormState",
    "batch_norm",
    "CheckReport",
    "finite_diff_check",
]
