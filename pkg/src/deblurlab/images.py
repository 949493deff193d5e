"""PNG-backed image I/O: float arrays in [0,1], channel-first (3,H,W)."""

from __future__ import annotations

import numpy as np
from PIL import Image


class ImageReadError(ValueError):
    pass


def load_image(path, resolution: int | None = None) -> np.ndarray:
    """Read an 8-bit image as float64 RGB in [0,1], shape (3, H, W).

    With ``resolution`` the image is center-cropped square then resized.
    """
    try:
        with Image.open(path) as im:
            im = im.convert("RGB")
            if resolution is not None:
                side = min(im.size)
                left = (im.size[0] - side) // 2
                top = (im.size[1] - side) // 2
                im = im.crop((left, top, left + side, top + side))
                im = im.resize((resolution, resolution), Image.Resampling.BILINEAR)
            arr = np.asarray(im, dtype=np.float64) / 255.0
    except (OSError, SyntaxError) as exc:
        raise ImageReadError(f"cannot read image {path}: {exc}") from exc
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def save_image(path, arr: np.ndarray) -> None:
    """Write a (3,H,W) or (H,W) float array in [0,1] as an 8-bit PNG."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr.transpose(1, 2, 0)
    data = np.rint(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(data).save(path, format="PNG")


def to_grayscale_png(path, grid: np.ndarray) -> None:
    """Visualize a non-negative grid (e.g. a PSF) scaled to its peak."""
    peak = grid.max()
    scaled = grid / peak if peak > 0 else grid
    Image.fromarray(np.rint(scaled * 255.0).astype(np.uint8)).save(path, format="PNG")
