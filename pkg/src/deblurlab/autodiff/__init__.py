"""Minimal deterministic tensor engine with reverse-mode differentiation."""

from .ops import (
    avg_pool2d,
    circular_fold,
    circular_pad,
    conv2d,
    conv2d_transpose,
    dropout,
    instance_norm,
    leaky_relu,
    pixel_shuffle,
)
from .tensor import (
    Tensor,
    backward,
    clamp,
    default_dtype,
    exp,
    grad,
    log,
    matmul,
    no_grad,
    ones,
    ones_like,
    set_debug_checks,
    set_default_dtype,
    sigmoid,
    tensor,
    tensor_mean,
    tensor_sum,
    topo_order,
    zeros,
    zeros_like,
)

__all__ = [
    "Tensor",
    "avg_pool2d",
    "backward",
    "circular_fold",
    "circular_pad",
    "clamp",
    "conv2d",
    "conv2d_transpose",
    "default_dtype",
    "dropout",
    "exp",
    "grad",
    "instance_norm",
    "leaky_relu",
    "log",
    "matmul",
    "no_grad",
    "ones",
    "ones_like",
    "pixel_shuffle",
    "set_debug_checks",
    "set_default_dtype",
    "sigmoid",
    "tensor",
    "tensor_mean",
    "tensor_sum",
    "topo_order",
    "zeros",
    "zeros_like",
]
