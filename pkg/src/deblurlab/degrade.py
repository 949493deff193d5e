"""Degradation pipeline: blur composition, sensor noise, paired datasets.

An image y is manufactured from a sharp x as convolution with the composed
point-spread function followed by additive/sampled noise, clamped to [0,1].
Every sampled parameter is recorded in a serializable spec so a pair can be
reproduced (or its kernel rebuilt) from the manifest line alone.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from . import kernels as rawconv
from .images import ImageReadError, load_image, save_image
from .psf import (
    DefocusSpec,
    Kernel,
    KernelError,
    MotionBlurSpec,
    ShakeSpec,
    compose_kernels,
    defocus_kernel,
    delta_kernel,
    motion_kernel,
    shake_kernel,
)
from .seeding import derive_seed, spawn_rng

BOUNDARY_PAD_MODES = {"replicate": "edge", "reflect": "reflect", "circular": "wrap"}
NOISE_KINDS = ("gaussian", "poisson", "impulse")
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")
MANIFEST_NAME = "manifest.txt"


class DegradeError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseSpec:
    """Sensor noise: kind plus its single intensity parameter.

    amount means sigma for gaussian, expected peak photon count for poisson,
    corrupted-pixel fraction for impulse.
    """

    kind: str
    amount: float
    seed: int = 0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise DegradeError(f"unknown noise kind {self.kind!r}")
        if self.kind == "gaussian" and self.amount < 0:
            raise DegradeError(f"gaussian sigma must be >= 0, got {self.amount}")
        if self.kind == "poisson" and self.amount <= 0:
            raise DegradeError(f"poisson peak must be > 0, got {self.amount}")
        if self.kind == "impulse" and not 0 <= self.amount <= 1:
            raise DegradeError(f"impulse density must be in [0,1], got {self.amount}")


def zero_noise(seed: int = 0) -> NoiseSpec:
    return NoiseSpec("gaussian", 0.0, seed)


@dataclass(frozen=True)
class KernelDef:
    """Parametric recipe for one blur kernel (family, parameters, grid size)."""

    family: str
    size: int
    length: float = 0.0
    angle: float = 0.0
    radius: float = 0.0
    control_points: int = 0
    seed: int = 0

    def build(self) -> Kernel:
        if self.family == "motion":
            return motion_kernel(MotionBlurSpec(self.length, self.angle), self.size)
        if self.family == "defocus":
            return defocus_kernel(DefocusSpec(self.radius), self.size)
        if self.family == "shake":
            return shake_kernel(
                ShakeSpec(self.control_points, self.length, seed=self.seed), self.size
            )
        if self.family == "delta":
            return delta_kernel(self.size)
        raise DegradeError(f"unknown kernel family {self.family!r}")


@dataclass(frozen=True)
class DegradationSpec:
    kernels: tuple[KernelDef, ...]
    noise: NoiseSpec
    boundary: str = "replicate"
    seed: int = 0

    def __post_init__(self):
        if not self.kernels:
            raise DegradeError("degradation needs at least one kernel")
        if self.boundary not in BOUNDARY_PAD_MODES:
            raise DegradeError(f"unknown boundary mode {self.boundary!r}")

    def composed_kernel(self) -> Kernel:
        return compose_kernels([k.build() for k in self.kernels])


@dataclass(frozen=True)
class ImagePair:
    sharp: np.ndarray
    blurred: np.ndarray
    spec: DegradationSpec

    def __post_init__(self):
        if self.sharp.shape != self.blurred.shape:
            raise DegradeError(
                f"pair shapes differ: {self.sharp.shape} vs {self.blurred.shape}"
            )


def convolve_image(x: np.ndarray, kernel: Kernel, boundary: str = "replicate") -> np.ndarray:
    """True per-channel 2-D convolution (kernel flipped), same-size output."""
    if boundary not in BOUNDARY_PAD_MODES:
        raise DegradeError(f"unknown boundary mode {boundary!r}")
    c, h, w = x.shape
    if kernel.size > h or kernel.size > w:
        raise DegradeError(f"kernel size {kernel.size} exceeds image extent {h}x{w}")
    r = kernel.radius
    pad = np.pad(x, ((0, 0), (r, r), (r, r)), mode=BOUNDARY_PAD_MODES[boundary])
    flipped = kernel.values[::-1, ::-1].reshape(1, 1, kernel.size, kernel.size)
    out = rawconv.conv2d(pad.reshape(c, 1, h + 2 * r, w + 2 * r), np.ascontiguousarray(flipped), 1, 0)
    return out.reshape(c, h, w)


def apply_noise(y: np.ndarray, spec: NoiseSpec) -> np.ndarray:
    """Seeded sensor noise; output clamped to [0,1]."""
    rng = spawn_rng("noise", spec.kind, spec.seed)
    if spec.kind == "gaussian":
        if spec.amount == 0.0:
            return y
        out = y + rng.normal(0.0, spec.amount, size=y.shape)
    elif spec.kind == "poisson":
        out = rng.poisson(np.clip(y, 0.0, None) * spec.amount).astype(np.float64) / spec.amount
    else:  # impulse
        if spec.amount == 0.0:
            return y
        out = y.copy()
        hit = rng.random(y.shape) < spec.amount
        salt = rng.random(y.shape) < 0.5
        out[hit] = salt[hit].astype(np.float64)
    return np.clip(out, 0.0, 1.0)


def degrade(x: np.ndarray, spec: DegradationSpec) -> np.ndarray:
    """y = x convolved with the composed kernel, then noise."""
    return apply_noise(convolve_image(x, spec.composed_kernel(), spec.boundary), spec.noise)


# -- random spec sampling -----------------------------------------------------


@dataclass(frozen=True)
class SamplerRanges:
    """Declared parameter ranges for the dataset degradation sampler."""

    motion_length: tuple[float, float] = (3.0, 21.0)
    motion_angle: tuple[float, float] = (0.0, np.pi)
    shake_length: tuple[float, float] = (3.0, 21.0)
    shake_points: tuple[int, int] = (3, 6)
    defocus_radius: tuple[float, float] = (1.0, 5.0)
    gaussian_sigma: tuple[float, float] = (0.0, 0.05)
    poisson_peak: tuple[float, float] = (200.0, 2000.0)
    impulse_density: tuple[float, float] = (0.0, 0.05)
    max_kernels: int = 3
    max_extent: int = 63  # resample until the composed kernel fits this


def desk_ranges(max_extent: int = 9) -> SamplerRanges:
    """Mild ranges for small training crops."""
    return SamplerRanges(
        motion_length=(3.0, 7.0),
        shake_length=(3.0, 7.0),
        defocus_radius=(1.0, 2.5),
        gaussian_sigma=(0.01, 0.05),
        poisson_peak=(200.0, 1000.0),
        impulse_density=(0.0, 0.03),
        max_kernels=2,
        max_extent=max_extent,
    )


def _odd_above(x: float) -> int:
    n = int(np.floor(x)) + 1
    return n if n % 2 == 1 else n + 1


def _sample_kernel(rng: np.random.Generator, ranges: SamplerRanges, seed_base: int, idx: int) -> KernelDef:
    family = ("motion", "shake", "defocus")[rng.integers(0, 3)]
    if family == "motion":
        length = rng.uniform(*ranges.motion_length)
        angle = rng.uniform(*ranges.motion_angle)
        return KernelDef("motion", _odd_above(length), length=length, angle=angle)
    if family == "shake":
        length = rng.uniform(*ranges.shake_length)
        points = int(rng.integers(ranges.shake_points[0], ranges.shake_points[1] + 1))
        return KernelDef(
            "shake",
            _odd_above(length),
            length=length,
            control_points=points,
            seed=derive_seed(seed_base, "shake", idx),
        )
    radius = rng.uniform(*ranges.defocus_radius)
    return KernelDef("defocus", _odd_above(2 * radius), radius=radius)


def random_spec(ranges: SamplerRanges, seed: int) -> DegradationSpec:
    """Sample 1..max_kernels composed kernels plus one noise model.

    Deterministic in ``seed``; redraws until the composed kernel extent fits
    ``ranges.max_extent``.
    """
    rng = spawn_rng("spec", seed)
    for attempt in range(1000):
        n = int(rng.integers(1, ranges.max_kernels + 1))
        kdefs = tuple(
            _sample_kernel(rng, ranges, derive_seed(seed, attempt), i) for i in range(n)
        )
        extent = sum(k.size for k in kdefs) - (n - 1)
        if extent <= ranges.max_extent:
            break
    else:
        raise DegradeError(
            f"could not sample a kernel composition within extent {ranges.max_extent}"
        )
    kind = NOISE_KINDS[rng.integers(0, 3)]
    amount = rng.uniform(*getattr(ranges, {"gaussian": "gaussian_sigma", "poisson": "poisson_peak", "impulse": "impulse_density"}[kind]))
    noise = NoiseSpec(kind, amount, seed=derive_seed(seed, "noise"))
    return DegradationSpec(kernels=kdefs, noise=noise, seed=seed)


# -- spec serialization -------------------------------------------------------


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def spec_to_string(spec: DegradationSpec) -> str:
    parts = [f"seed={spec.seed}", f"boundary={spec.boundary}"]
    parts.append(
        f"noise={spec.noise.kind};amount={_fmt(spec.noise.amount)};seed={spec.noise.seed}"
    )
    for k in spec.kernels:
        fields = [k.family, f"size={k.size}"]
        if k.family == "motion":
            fields += [f"length={_fmt(k.length)}", f"angle={_fmt(k.angle)}"]
        elif k.family == "shake":
            fields += [f"length={_fmt(k.length)}", f"points={k.control_points}", f"seed={k.seed}"]
        elif k.family == "defocus":
            fields += [f"radius={_fmt(k.radius)}"]
        parts.append("kernel=" + ";".join(fields))
    return ",".join(parts)


def spec_from_string(text: str) -> DegradationSpec:
    seed = 0
    boundary = "replicate"
    noise = None
    kdefs = []
    for chunk in text.strip().split(","):
        key, _, value = chunk.partition("=")
        if key == "seed":
            seed = int(value)
        elif key == "boundary":
            boundary = value
        elif key == "noise":
            head, *rest = value.split(";")
            kv = dict(item.split("=", 1) for item in rest)
            noise = NoiseSpec(head, float(kv["amount"]), int(kv["seed"]))
        elif key == "kernel":
            head, *rest = value.split(";")
            kv = dict(item.split("=", 1) for item in rest)
            kdefs.append(
                KernelDef(
                    head,
                    int(kv["size"]),
                    length=float(kv.get("length", 0.0)),
                    angle=float(kv.get("angle", 0.0)),
                    radius=float(kv.get("radius", 0.0)),
                    control_points=int(kv.get("points", 0)),
                    seed=int(kv.get("seed", 0)),
                )
            )
        else:
            raise DegradeError(f"unknown spec field {key!r}")
    if noise is None:
        raise DegradeError("spec string lacks a noise entry")
    return DegradationSpec(tuple(kdefs), noise, boundary, seed)


# -- dataset generation -------------------------------------------------------


def list_sharp_images(sharp_dir) -> list[Path]:
    root = Path(sharp_dir)
    if not root.is_dir():
        raise DegradeError(f"sharp image directory not found: {root}")
    files = sorted(p for p in root.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise DegradeError(f"no readable images in {root}")
    return files


def make_dataset(
    sharp_dir,
    n_pairs: int,
    seed: int,
    out_dir,
    resolution: int = 64,
    ranges: SamplerRanges | None = None,
) -> Path:
    """Emit n_pairs (sharp, blurred) PNG pairs plus a manifest; returns its path.

    Sharp sources repeat round-robin when n_pairs exceeds their count, each
    repetition with an independently sampled degradation.
    """
    files = list_sharp_images(sharp_dir)
    if ranges is None:
        ranges = SamplerRanges(max_extent=min(63, resolution - 1))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = []
    for i in range(n_pairs):
        src = files[i % len(files)]
        try:
            sharp = load_image(src, resolution=resolution)
        except ImageReadError as exc:
            raise DegradeError(str(exc)) from exc
        spec = random_spec(ranges, derive_seed(seed, "pair", i))
        blurred = degrade(sharp, spec)
        sharp_name = f"sharp_{i:05d}.png"
        blur_name = f"blur_{i:05d}.png"
        save_image(out / sharp_name, sharp)
        save_image(out / blur_name, blurred)
        lines.append(f"{i},{sharp_name},{blur_name},{spec_to_string(spec)}")
    manifest = out / MANIFEST_NAME
    manifest.write_text("".join(line + "\n" for line in lines))
    return manifest


def load_dataset(dataset_dir) -> list[ImagePair]:
    """Read back every pair listed in a dataset manifest."""
    root = Path(dataset_dir)
    manifest = root / MANIFEST_NAME
    if not manifest.is_file():
        raise DegradeError(f"manifest not found: {manifest}")
    pairs = []
    for line in manifest.read_text().splitlines():
        if not line.strip():
            continue
        _, sharp_name, blur_name, spec_text = line.split(",", 3)
        pairs.append(
            ImagePair(
                sharp=load_image(root / sharp_name),
                blurred=load_image(root / blur_name),
                spec=spec_from_string(spec_text),
            )
        )
    return pairs
