"""Differentiable layer operations on NCHW tensors.

The three convolution primitives (forward, input-gradient, weight-gradient)
are mutually adjoint and each one's VJP is built from the other two, so the
set is closed under repeated differentiation.
"""

from __future__ import annotations

import numpy as np

from .. import kernels as K
from ..seeding import spawn_rng
from .tensor import Tensor, record, tensor_mean, tensor_sum


def _conv_out_hw(h: int, w: int, kh: int, kw: int, stride: int, padding: int):
    return (
        (h + 2 * padding - kh) // stride + 1,
        (w + 2 * padding - kw) // stride + 1,
    )


def conv2d(x: Tensor, weight: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlate (N,Ci,H,W) with (Co,Ci,kh,kw); no kernel flip."""
    if x.ndim != 4 or weight.ndim != 4:
        raise ValueError(f"conv2d expects 4-D input/weight, got {x.shape} and {weight.shape}")
    n, ci, h, w = x.shape
    co, ci_w, kh, kw = weight.shape
    data = K.conv2d(x.data, weight.data, stride, padding)

    def vjp(g: Tensor):
        return (
            _conv2d_input_grad(g, weight, stride, padding, (h, w)),
            _conv2d_weight_grad(x, g, stride, padding, (kh, kw)),
        )

    return record("conv2d", data, (x, weight), vjp)


def _conv2d_input_grad(g: Tensor, weight: Tensor, stride, padding, in_hw) -> Tensor:
    data = K.conv2d_input_grad(g.data, weight.data, stride, padding, in_hw)
    kh, kw = weight.shape[2], weight.shape[3]

    def vjp(u: Tensor):
        return (
            conv2d(u, weight, stride, padding),
            _conv2d_weight_grad(u, g, stride, padding, (kh, kw)),
        )

    return record("conv2d_input_grad", data, (g, weight), vjp)


def _conv2d_weight_grad(x: Tensor, g: Tensor, stride, padding, khw) -> Tensor:
    data = K.conv2d_weight_grad(x.data, g.data, stride, padding, khw)
    in_hw = (x.shape[2], x.shape[3])

    def vjp(u: Tensor):
        return (
            _conv2d_input_grad(g, u, stride, padding, in_hw),
            conv2d(x, u, stride, padding),
        )

    return record("conv2d_weight_grad", data, (x, g), vjp)


def conv2d_transpose(x: Tensor, weight: Tensor, stride: int = 2, padding: int = 0) -> Tensor:
    """Adjoint of conv2d; weight laid out (Cin, Cout, kh, kw).

    Output spatial extent is (H-1)*stride - 2*padding + kh.
    """
    if x.ndim != 4 or weight.ndim != 4:
        raise ValueError(
            f"conv2d_transpose expects 4-D input/weight, got {x.shape} and {weight.shape}"
        )
    n, ci, h, w = x.shape
    ci_w, co, kh, kw = weight.shape
    if ci != ci_w:
        raise ValueError(f"channel mismatch: input has {ci} channels, weight expects {ci_w}")
    out_hw = ((h - 1) * stride - 2 * padding + kh, (w - 1) * stride - 2 * padding + kw)
    if out_hw[0] < 1 or out_hw[1] < 1:
        raise ValueError(f"transpose conv produces empty output {out_hw}")
    # (Cin, Cout, kh, kw) is exactly the (Co, Ci, kh, kw) the scatter expects
    return _conv2d_input_grad(x, weight, stride, padding, out_hw)


def circular_pad(x: Tensor, p: int) -> Tensor:
    """Wrap-pad the two trailing axes by p (adjoint: circular_fold)."""
    if p < 1:
        return x
    data = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p)), mode="wrap")
    return record("circular_pad", data, (x,), lambda g: (circular_fold(g, p),))


def circular_fold(g: Tensor, p: int) -> Tensor:
    """Adjoint of circular_pad: fold the wrapped borders back onto the core."""
    n, c, hp, wp = g.shape
    h, w = hp - 2 * p, wp - 2 * p
    data = np.zeros((n, c, h, w), dtype=g.data.dtype)
    for oi in (-h, 0, h):
        for oj in (-w, 0, w):
            i0, i1 = max(0, p + oi), min(hp, p + h + oi)
            j0, j1 = max(0, p + oj), min(wp, p + w + oj)
            if i0 < i1 and j0 < j1:
                data[:, :, i0 - p - oi : i1 - p - oi, j0 - p - oj : j1 - p - oj] += g.data[
                    :, :, i0:i1, j0:j1
                ]
    return record("circular_fold", data, (g,), lambda u: (circular_pad(u, p),))


def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """Rearrange (N, C*r*r, H, W) -> (N, C, H*r, W*r)."""
    n, c, h, w = x.shape
    if c % (r * r) != 0:
        raise ValueError(f"pixel_shuffle needs channels divisible by r^2={r * r}, got {c}")
    cout = c // (r * r)
    from .tensor import reshape, transpose

    y = reshape(x, (n, cout, r, r, h, w))
    y = transpose(y, (0, 1, 4, 2, 5, 3))
    return reshape(y, (n, cout, h * r, w * r))


def avg_pool2d(x: Tensor, window: int = 2, stride: int = 2) -> Tensor:
    """Non-overlapping window mean; requires stride == window."""
    if stride != window:
        raise ValueError(f"avg_pool2d supports stride == window only, got {window}/{stride}")
    n, c, h, w = x.shape
    if h % window or w % window:
        raise ValueError(f"spatial extents {h}x{w} not divisible by window {window}")
    from .tensor import reshape

    y = reshape(x, (n, c, h // window, window, w // window, window))
    return tensor_mean(y, axis=(3, 5))


def instance_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each (n, c) plane to zero mean / unit variance, then affine."""
    if x.ndim != 4:
        raise ValueError(f"instance_norm expects NCHW input, got {x.shape}")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ValueError(f"affine parameters must have shape ({c},)")
    from .tensor import reshape

    mu = tensor_mean(x, axis=(2, 3), keepdims=True)
    centered = x - mu
    var = tensor_mean(centered * centered, axis=(2, 3), keepdims=True)
    normed = centered * (var + eps) ** -0.5
    return normed * reshape(gamma, (1, c, 1, 1)) + reshape(beta, (1, c, 1, 1))


def leaky_relu(x: Tensor, alpha: float = 0.1) -> Tensor:
    """y = x for x >= 0 else alpha * x (slope mask is constant on the tape)."""
    slope = np.where(x.data >= 0.0, 1.0, alpha)
    return x * Tensor(slope)


def dropout(x: Tensor, p: float = 0.5, training: bool = True, seed=0) -> Tensor:
    """Inverted dropout: zero with probability p, scale survivors by 1/(1-p).

    Identity when not training or p == 0; the mask is a pure function of
    ``seed``.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    rng = spawn_rng("dropout", seed)
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return x * Tensor(mask)
