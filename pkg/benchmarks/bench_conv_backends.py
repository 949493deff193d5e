"""Compare the compiled and pure-NumPy convolution backends.

Times the three raw kernels (forward, input grad, weight grad) over shapes
matching the training hot path. Run after an editable install:

    python benchmarks/bench_conv_backends.py
"""

import time

import numpy as np

from deblurlab import kernels as K
from deblurlab.kernels import _refconv

try:
    from deblurlab.kernels import _fastconv
except ImportError:
    _fastconv = None

SHAPES = [
    # (N, Ci, H, W, Co, k, stride, pad)   roughly the desk training layers
    (4, 3, 16, 16, 32, 7, 1, 3),
    (4, 32, 16, 16, 16, 7, 2, 3),
    (4, 16, 8, 8, 16, 5, 1, 2),
    (4, 32, 64, 64, 32, 7, 1, 3),
    (4, 64, 32, 32, 64, 3, 1, 1),
]


def run_case(impl, x, w, stride, pad, reps):
    n, ci, h, wd = x.shape
    co, _, kh, kw = w.shape
    orig = K._impl
    K._impl = impl
    try:
        y = K.conv2d(x, w, stride, pad)
        t0 = time.perf_counter()
        for _ in range(reps):
            K.conv2d(x, w, stride, pad)
        fwd = (time.perf_counter() - t0) / reps
        t0 = time.perf_counter()
        for _ in range(reps):
            K.conv2d_input_grad(y, w, stride, pad, (h, wd))
        dgrad = (time.perf_counter() - t0) / reps
        t0 = time.perf_counter()
        for _ in range(reps):
            K.conv2d_weight_grad(x, y, stride, pad, (kh, kw))
        wgrad = (time.perf_counter() - t0) / reps
    finally:
        K._impl = orig
    return fwd, dgrad, wgrad


def main():
    if _fastconv is None:
        print("compiled backend unavailable; build with `pip install -e .`")
        return
    rng = np.random.default_rng(0)
    print(f"active backend at import: {K.backend_name()}")
    print(f"{'shape':<28}{'kernel':<14}{'numpy ms':>10}{'compiled ms':>13}{'speedup':>9}")
    for n, ci, h, w, co, k, stride, pad in SHAPES:
        x = rng.standard_normal((n, ci, h, w))
        wt = rng.standard_normal((co, ci, k, k))
        reps = max(3, int(2e6 / (n * ci * h * w * k * k)))
        ref = run_case(_refconv, x, wt, stride, pad, reps)
        fast = run_case(_fastconv, x, wt, stride, pad, reps)
        label = f"{n}x{ci}x{h}x{w} k{k}s{stride}"
        for name, r, f in zip(("forward", "input_grad", "weight_grad"), ref, fast):
            print(f"{label:<28}{name:<14}{r * 1e3:>10.3f}{f * 1e3:>13.3f}{r / f:>9.2f}x")
        # identical bits regardless of backend
        orig = K._impl
        K._impl = _refconv
        a = K.conv2d(x, wt, stride, pad)
        K._impl = _fastconv
        b = K.conv2d(x, wt, stride, pad)
        K._impl = orig
        assert np.array_equal(a, b), "backend outputs diverged"
    print("bit-identical outputs across backends: ok")


if __name__ == "__main__":
    main()
