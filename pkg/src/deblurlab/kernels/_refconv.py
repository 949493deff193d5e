"""Pure-NumPy im2col / col2im, the fallback when the compiled core is absent.

Accumulation order in ``col2im`` is (ki, kj) ascending per output element,
which the compiled backend reproduces exactly, so both backends are
bit-identical (the GEMM around them is shared numpy ``dot``).
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """Gather sliding (kh, kw) patches of a padded NCHW array.

    Returns a contiguous array of shape (N, OH, OW, C, kh, kw).
    """
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride]
    return np.ascontiguousarray(windows.transpose(0, 2, 3, 1, 4, 5))


def col2im(cols: np.ndarray, hp: int, wp: int, stride: int) -> np.ndarray:
    """Scatter-add patch columns back onto a padded (N, C, hp, wp) canvas."""
    n, oh, ow, c, kh, kw = cols.shape
    out = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    for ki in range(kh):
        for kj in range(kw):
            out[:, :, ki : ki + oh * stride : stride, kj : kj + ow * stride : stride] += (
                cols[:, :, :, :, ki, kj].transpose(0, 3, 1, 2)
            )
    return out
