"""Parametric blur kernels: linear motion, camera-shake trajectories, defocus.

Grids use centered coordinates (i down from center, j right from center) on
odd-sized squares, and every constructed kernel is normalized to unit mass.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.signal import convolve2d

from .seeding import spawn_rng

SUPERSAMPLES_PER_CELL = 16


class KernelError(ValueError):
    pass


@dataclass(frozen=True)
class Kernel:
    """Normalized non-negative square grid of odd size."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise KernelError(f"kernel grid must be square, got {v.shape}")
        if v.shape[0] % 2 == 0:
            raise KernelError(f"kernel size must be odd, got {v.shape[0]}")
        if (v < 0).any():
            raise KernelError("kernel values must be non-negative")
        total = v.sum()
        if total <= 0:
            raise KernelError("kernel has no mass")
        # skip the division when already normalized so that reconstruction
        # (e.g. parsing a saved grid) is bit-exact
        if abs(total - 1.0) > 1e-9:
            v = v / total
        object.__setattr__(self, "values", v)

    @property
    def size(self) -> int:
        return self.values.shape[0]

    @property
    def radius(self) -> int:
        return self.values.shape[0] // 2

    def __eq__(self, other) -> bool:
        return isinstance(other, Kernel) and np.array_equal(self.values, other.values)


def delta_kernel(size: int = 1) -> Kernel:
    grid = np.zeros((size, size))
    grid[size // 2, size // 2] = 1.0
    return Kernel(grid)


@dataclass(frozen=True)
class MotionBlurSpec:
    length: float
    angle: float = 0.0

    def __post_init__(self):
        if self.length < 1:
            raise KernelError(f"motion length must be >= 1, got {self.length}")


@dataclass(frozen=True)
class DefocusSpec:
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise KernelError(f"defocus radius must be > 0, got {self.radius}")


@dataclass(frozen=True)
class ShakeSpec:
    control_points: int
    trajectory_length: float
    seed: int = 0
    points: Optional[tuple] = None  # explicit (i, j) control polygon, mostly for tests

    def __post_init__(self):
        if self.control_points < 2:
            raise KernelError(f"shake needs >= 2 control points, got {self.control_points}")
        if self.points is not None and len(self.points) != self.control_points:
            raise KernelError(
                f"got {len(self.points)} explicit points for control_points={self.control_points}"
            )


def _check_odd(size: int):
    if size < 1 or size % 2 == 0:
        raise KernelError(f"kernel size must be odd and positive, got {size}")


def _segment_points(length: float, angle: float) -> np.ndarray:
    """Dense (i, j) samples of the centered segment of given length/angle.

    The direction follows i/j = -tan(angle): j = t*cos, i = -t*sin with the
    i axis pointing down the grid.
    """
    n = max(2, int(np.ceil(length * SUPERSAMPLES_PER_CELL)) + 1)
    t = np.linspace(-length / 2.0, length / 2.0, n)
    return np.stack([-t * np.sin(angle), t * np.cos(angle)], axis=1)


def _rasterize(points: np.ndarray, size: int, weighted: bool) -> np.ndarray:
    """Round dense trajectory samples to cells; dwell count or occupancy."""
    half = size // 2
    cells = np.rint(points).astype(np.int64)
    if (np.abs(cells) > half).any():
        raise KernelError(f"trajectory escapes the {size}x{size} kernel grid")
    grid = np.zeros((size, size))
    np.add.at(grid, (cells[:, 0] + half, cells[:, 1] + half), 1.0)
    if not weighted:
        grid = (grid > 0).astype(np.float64)
    return grid


def motion_kernel(spec: MotionBlurSpec, size: int) -> Kernel:
    """Uniform line-segment blur of length L at the given angle.

    The centered segment (direction i/j = -tan(angle)) is rasterized one
    cell thick: at every integer step of the dominant axis it covers, the
    nearest cell to the line is taken, restricted to cell centers inside the
    closed L/2 disk. Support is therefore at most ceil(L)+1 cells and the
    axis-aligned cases reduce to a plain 1-D average.
    """
    _check_odd(size)
    if size <= spec.length:
        raise KernelError(f"kernel size {size} must exceed blur length {spec.length}")
    direction = np.array([-np.sin(spec.angle), np.cos(spec.angle)])
    end = direction * spec.length / 2.0
    dominant = 1 if abs(direction[1]) >= abs(direction[0]) else 0
    k_max = int(np.floor(abs(direction[dominant]) * spec.length / 2.0 + 1e-9))
    half = size // 2
    if k_max > half:
        raise KernelError(f"trajectory escapes the {size}x{size} kernel grid")
    grid = np.zeros((size, size))
    limit = (spec.length / 2.0) ** 2 + 1e-12
    for k in range(-k_max, k_max + 1):
        m_line = k / direction[dominant] * direction[1 - dominant]
        candidates = []
        for m in (int(np.floor(m_line)) - 1 + off for off in range(3)):
            cell = (m, k) if dominant == 1 else (k, m)
            candidates.append((_segment_distance(cell, -end, end), cell))
        _, (i, j) = min(candidates)
        if i * i + j * j <= limit:
            grid[i + half, j + half] = 1.0
    return Kernel(grid)


def _segment_distance(p, a, b) -> float:
    ap = np.asarray(p, dtype=np.float64) - a
    ab = b - a
    t = np.clip(float(ap @ ab) / float(ab @ ab), 0.0, 1.0)
    return float(np.linalg.norm(ap - t * ab))


def _catmull_rom(points: np.ndarray, samples_per_segment: int) -> np.ndarray:
    """Centripetal-free (uniform) Catmull-Rom through all points."""
    pts = np.vstack([points[:1], points, points[-1:]])
    out = []
    for k in range(len(points) - 1):
        p0, p1, p2, p3 = pts[k], pts[k + 1], pts[k + 2], pts[k + 3]
        t = np.linspace(0.0, 1.0, samples_per_segment, endpoint=(k == len(points) - 2))
        t = t[:, None]
        out.append(
            0.5
            * (
                2 * p1
                + (p2 - p0) * t
                + (2 * p0 - 5 * p1 + 4 * p2 - p3) * t**2
                + (3 * p1 - p0 - 3 * p2 + p3) * t**3
            )
        )
    return np.vstack(out)


def shake_kernel(spec: ShakeSpec, size: int) -> Kernel:
    """Seeded spline trajectory rasterized with dwell-time weighting."""
    _check_odd(size)
    if spec.points is not None:
        ctrl = np.asarray(spec.points, dtype=np.float64)
    else:
        rng = spawn_rng("shake", spec.seed)
        ctrl = rng.uniform(-1.0, 1.0, size=(spec.control_points, 2))
    dense = _catmull_rom(ctrl, samples_per_segment=256)
    seg = np.linalg.norm(np.diff(dense, axis=0), axis=1).sum()
    if seg > 0:
        dense = dense * (spec.trajectory_length / seg)
    # bounding-box centering keeps a straight path identical to motion blur
    dense = dense - (dense.min(axis=0) + dense.max(axis=0)) / 2.0
    grid = _rasterize(dense, size, weighted=True)
    return Kernel(grid)


def defocus_kernel(spec: DefocusSpec, size: int) -> Kernel:
    """Uniform disk: integer grid points with i^2 + j^2 <= R^2."""
    _check_odd(size)
    if size <= 2 * spec.radius:
        raise KernelError(f"kernel size {size} must exceed disk diameter {2 * spec.radius}")
    half = size // 2
    ii, jj = np.meshgrid(np.arange(-half, half + 1), np.arange(-half, half + 1), indexing="ij")
    grid = (ii * ii + jj * jj <= spec.radius**2).astype(np.float64)
    grid /= np.pi * spec.radius**2
    return Kernel(grid)


def compose_kernels(kernels: Sequence[Kernel]) -> Kernel:
    """Full 2-D convolution of all kernels; size grows to sum(sizes)-(n-1)."""
    if not kernels:
        raise KernelError("compose_kernels needs a non-empty kernel list")
    grid = kernels[0].values
    for k in kernels[1:]:
        grid = convolve2d(grid, k.values, mode="full")
    return Kernel(np.clip(grid, 0.0, None))


# -- plain-text serialization -------------------------------------------------


def save_kernel(kernel: Kernel, path) -> None:
    """First line the size, then one row of %.17g values per grid row."""
    lines = [str(kernel.size)]
    for row in kernel.values:
        lines.append(" ".join(format(v, ".17g") for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_kernel(path) -> Kernel:
    with open(path) as fh:
        raw = fh.read().split("\n")
    size = int(raw[0])
    rows = [np.array([float(v) for v in line.split()]) for line in raw[1 : size + 1]]
    grid = np.stack(rows)
    if grid.shape != (size, size):
        raise KernelError(f"malformed kernel file: expected {size}x{size} grid")
    return Kernel(grid)
