"""Quality metrics, the classical Wiener baseline, and the report generator.

PSNR/SSIM are computed in [0,1] float space. The Wiener filter inverts a
known kernel under a circular-convolution assumption in the frequency
domain, which makes its zero-noise round trip essentially exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import autodiff as ad
from .degrade import ImagePair
from .images import save_image
from .model import GeneratorConfig, generator_forward
from .psf import Kernel

IDENTICAL = math.inf  # sentinel PSNR for a zero-MSE pair


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """10*log10(peak^2 / MSE); +inf when the images are identical."""
    if a.shape != b.shape:
        raise ValueError(f"psnr shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return IDENTICAL
    return 10.0 * math.log10(peak * peak / mse)


def ssim(
    a: np.ndarray,
    b: np.ndarray,
    window: int = 8,
    k1: float = 0.01,
    k2: float = 0.03,
    peak: float = 1.0,
) -> float:
    """Mean structural similarity over sliding windows and channels."""
    if a.shape != b.shape:
        raise ValueError(f"ssim shapes differ: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[None], b[None]
    c1, c2 = (k1 * peak) ** 2, (k2 * peak) ** 2
    values = []
    for ca, cb in zip(a, b):
        wa = sliding_window_view(ca, (window, window))
        wb = sliding_window_view(cb, (window, window))
        mu_a = wa.mean(axis=(2, 3))
        mu_b = wb.mean(axis=(2, 3))
        var_a = wa.var(axis=(2, 3))
        var_b = wb.var(axis=(2, 3))
        cov = (wa * wb).mean(axis=(2, 3)) - mu_a * mu_b
        s = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
            (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
        )
        values.append(s.mean())
    return float(np.mean(values))


def circular_convolve(x: np.ndarray, h: Kernel) -> np.ndarray:
    """Per-channel circular (wrap) convolution, same size; no noise, no clamp."""
    c, hgt, wdt = x.shape
    hf = _kernel_transfer(h, hgt, wdt)
    out = np.empty_like(x)
    for ch in range(c):
        out[ch] = np.real(np.fft.ifft2(np.fft.fft2(x[ch]) * hf))
    return out


def _kernel_transfer(h: Kernel, height: int, width: int) -> np.ndarray:
    """DFT of the kernel embedded with its center at the origin."""
    if h.size > height or h.size > width:
        raise ValueError(f"kernel size {h.size} exceeds image extent {height}x{width}")
    grid = np.zeros((height, width))
    r = h.radius
    grid[: h.size, : h.size] = h.values
    grid = np.roll(grid, (-r, -r), axis=(0, 1))
    return np.fft.fft2(grid)


def wiener_deconvolve(y: np.ndarray, h: Kernel, nsr: float) -> np.ndarray:
    """Frequency-domain X = conj(H) Y / (|H|^2 + nsr), clamped to [0,1]."""
    if nsr < 0:
        raise ValueError(f"noise-to-signal ratio must be >= 0, got {nsr}")
    c, hgt, wdt = y.shape
    hf = _kernel_transfer(h, hgt, wdt)
    denom = np.abs(hf) ** 2 + nsr
    out = np.empty_like(y)
    for ch in range(c):
        out[ch] = np.real(np.fft.ifft2(np.conj(hf) * np.fft.fft2(y[ch]) / denom))
    return np.clip(out, 0.0, 1.0)


# -- dataset evaluation -------------------------------------------------------


@dataclass
class EvalRow:
    pair: int
    psnr_blur: float
    psnr_restored: float
    ssim_restored: float
    psnr_wiener: float


@dataclass
class EvalReport:
    rows: list[EvalRow]

    HEADER = "pair,psnr_blur,psnr_restored,ssim_restored,psnr_wiener"

    def mean(self, attr: str) -> float:
        finite = [getattr(r, attr) for r in self.rows if math.isfinite(getattr(r, attr))]
        return float(np.mean(finite)) if finite else math.nan

    def to_csv(self) -> str:
        fmt = lambda v: "identical" if v == IDENTICAL else format(v, ".9g")
        lines = [self.HEADER]
        for r in self.rows:
            lines.append(
                f"{r.pair},{fmt(r.psnr_blur)},{fmt(r.psnr_restored)},"
                f"{format(r.ssim_restored, '.9g')},{fmt(r.psnr_wiener)}"
            )
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_csv())


def _triptych(blurred: np.ndarray, restored: np.ndarray, sharp: np.ndarray) -> np.ndarray:
    gap = np.ones((3, blurred.shape[1], 2))
    return np.concatenate([blurred, gap, restored, gap, sharp], axis=2)


def evaluate(
    params_g,
    gen_cfg: GeneratorConfig,
    pairs: Sequence[ImagePair],
    out_dir=None,
    nsr: float = 1e-2,
) -> EvalReport:
    """Run the generator (inference mode) plus the Wiener baseline per pair.

    Writes report.csv and pair_<id>.png triptychs (blurred | restored | sharp)
    when ``out_dir`` is given.
    """
    out = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
    rows = []
    for idx, pair in enumerate(pairs):
        with ad.no_grad():
            restored = generator_forward(
                params_g, ad.tensor(pair.blurred[None]), gen_cfg, training=False
            ).data[0]
        wiener = wiener_deconvolve(pair.blurred, pair.spec.composed_kernel(), nsr)
        rows.append(
            EvalRow(
                pair=idx,
                psnr_blur=psnr(pair.blurred, pair.sharp),
                psnr_restored=psnr(restored, pair.sharp),
                ssim_restored=ssim(restored, pair.sharp),
                psnr_wiener=psnr(wiener, pair.sharp),
            )
        )
        if out is not None:
            save_image(out / f"pair_{idx:05d}.png", _triptych(pair.blurred, restored, pair.sharp))
    report = EvalReport(rows)
    if out is not None:
        report.write(out / "report.csv")
    return report
