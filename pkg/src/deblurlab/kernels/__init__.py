"""Raw convolution kernels with a compiled core and a NumPy fallback.

The backend only supplies the patch gather/scatter (``im2col``/``col2im``);
the surrounding GEMM is the same numpy ``dot`` either way, so swapping
backends never changes a single output bit.  Selection happens at import,
overridable with ``DEBLURLAB_CONV_BACKEND=python|compiled``.

All functions use cross-correlation semantics (no kernel flip) on NCHW
arrays, weights laid out (Cout, Cin, kh, kw).
"""

import os

import numpy as np

from . import _refconv

_requested = os.environ.get("DEBLURLAB_CONV_BACKEND", "auto")
if _requested not in ("auto", "python", "compiled"):
    raise ValueError(f"unknown conv backend {_requested!r}")

if _requested == "python":
    _impl = _refconv
else:
    try:
        from . import _fastconv as _impl
    except ImportError:
        if _requested == "compiled":
            raise
        _impl = _refconv

BACKEND = "compiled" if _impl is not _refconv else "python"


def backend_name() -> str:
    return BACKEND


def _dispatch(arr: np.ndarray):
    # compiled loops are float64-only; anything else takes the numpy path
    return _impl if arr.dtype == np.float64 else _refconv


def _check_conv_geometry(ci_x, ci_w, h, w, kh, kw, stride, padding):
    if ci_x != ci_w:
        raise ValueError(f"channel mismatch: input has {ci_x} channels, weight expects {ci_w}")
    if stride < 1:
        raise ValueError(f"stride must be positive, got {stride}")
    if padding < 0:
        raise ValueError(f"padding must be non-negative, got {padding}")
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise ValueError(
            f"kernel ({kh}x{kw}) exceeds padded input ({h + 2 * padding}x{w + 2 * padding})"
        )


def _pad(x, padding):
    if padding == 0:
        return np.ascontiguousarray(x)
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def conv2d(x: np.ndarray, w: np.ndarray, stride: int, padding: int) -> np.ndarray:
    """Strided cross-correlation of (N,Ci,H,W) with (Co,Ci,kh,kw)."""
    n, ci, h, wd = x.shape
    co, ci_w, kh, kw = w.shape
    _check_conv_geometry(ci, ci_w, h, wd, kh, kw, stride, padding)
    cols = _dispatch(x).im2col(_pad(x, padding), kh, kw, stride)
    _, oh, ow, _, _, _ = cols.shape
    y = cols.reshape(n * oh * ow, ci * kh * kw) @ w.reshape(co, -1).T
    return np.ascontiguousarray(y.reshape(n, oh, ow, co).transpose(0, 3, 1, 2))


def conv2d_input_grad(
    g: np.ndarray, w: np.ndarray, stride: int, padding: int, in_hw: tuple[int, int]
) -> np.ndarray:
    """Adjoint of conv2d in its input: scatter g back through w.

    ``in_hw`` is the (H, W) of the original (unpadded) input; needed because
    the strided floor makes the output size non-invertible.
    """
    n, co, oh, ow = g.shape
    co_w, ci, kh, kw = w.shape
    if co != co_w:
        raise ValueError(f"channel mismatch: grad has {co} channels, weight produces {co_w}")
    h, wd = in_hw
    hp, wp = h + 2 * padding, wd + 2 * padding
    if (oh - 1) * stride + kh > hp or (ow - 1) * stride + kw > wp:
        raise ValueError("gradient spatial extent inconsistent with target input size")
    cols = g.transpose(0, 2, 3, 1).reshape(n * oh * ow, co) @ w.reshape(co, -1)
    cols = np.ascontiguousarray(cols.reshape(n, oh, ow, ci, kh, kw))
    dxp = _dispatch(cols).col2im(cols, hp, wp, stride)
    if padding == 0:
        return dxp
    return np.ascontiguousarray(dxp[:, :, padding : padding + h, padding : padding + wd])


def conv2d_weight_grad(
    x: np.ndarray, g: np.ndarray, stride: int, padding: int, khw: tuple[int, int]
) -> np.ndarray:
    """Adjoint of conv2d in its weight: correlate input patches with g."""
    n, ci, h, wd = x.shape
    n_g, co, oh, ow = g.shape
    if n != n_g:
        raise ValueError(f"batch mismatch: input {n} vs grad {n_g}")
    kh, kw = khw
    cols = _dispatch(x).im2col(_pad(x, padding), kh, kw, stride)
    cols_oh, cols_ow = cols.shape[1], cols.shape[2]
    if (cols_oh, cols_ow) != (oh, ow):
        raise ValueError(
            f"grad spatial size {(oh, ow)} does not match conv output {(cols_oh, cols_ow)}"
        )
    g2 = g.transpose(0, 2, 3, 1).reshape(n * oh * ow, co)
    dw = g2.T @ cols.reshape(n * oh * ow, ci * kh * kw)
    return np.ascontiguousarray(dw.reshape(co, ci, kh, kw))
