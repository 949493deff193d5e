"""Restoration generator and Markovian patch critic.

The generator is a residual chain: head conv, a 2x downsampling stage that
sums an average-pool branch with a stride-2 conv branch, a run of residual
blocks (four conv units each, with an additive carry from each block's third
activation into the next block's first), a 2x upsampling stage summing a
pixel-shuffle branch with a stride-2 transpose-conv branch, and two rear
convs. The network predicts a residual added onto its blurred input
(global skip), clamped to [0,1].

The critic is ten conv layers with two stride-2 steps, emitting an unbounded
per-patch score map (no sigmoid).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .seeding import derive_seed, spawn_rng

ModelParams = dict[str, Tensor]


@dataclass(frozen=True)
class GeneratorConfig:
    head_channels: int = 256
    head_kernel: int = 7
    res_blocks: int = 7
    res_channels: int = 128
    res_kernel: int = 5
    dropout_p: float = 0.5
    leaky_alpha: float = 0.1
    scale_factor: int = 2

    def __post_init__(self):
        if self.res_blocks < 1:
            raise ValueError(f"need at least one residual block, got {self.res_blocks}")
        if min(self.head_channels, self.res_channels) < 1:
            raise ValueError("channel counts must be positive")
        if self.scale_factor not in (1, 2):
            raise ValueError(f"supported scale factors are 1 and 2, got {self.scale_factor}")
        if self.head_kernel % 2 == 0 or self.res_kernel % 2 == 0:
            raise ValueError("conv kernels must be odd for same-size padding")


@dataclass(frozen=True)
class DiscriminatorConfig:
    layers: int = 10
    base_channels: int = 64
    leaky_alpha: float = 0.1
    patch_output: bool = True
    downsample_layers: int = 2  # stride-2 layers, keeps patch receptive field < 64
    channel_cap_factor: int = 8

    def __post_init__(self):
        if self.layers < 1:
            raise ValueError(f"discriminator needs >= 1 layers, got {self.layers}")
        if self.base_channels < 1:
            raise ValueError("base_channels must be positive")


def desk_generator_config() -> GeneratorConfig:
    return GeneratorConfig(head_channels=32, res_blocks=3, res_channels=16)


def desk_discriminator_config() -> DiscriminatorConfig:
    return DiscriminatorConfig(base_channels=16)


INIT_STD = 0.02


def _conv_init(rng, shape, std=INIT_STD):
    return Tensor(rng.normal(0.0, std, size=shape), requires_grad=True)


def _add_conv(params, rng, name, cin, cout, k, norm=True, zero=False):
    shape = (cout, cin, k, k)
    params[f"{name}.w"] = (
        Tensor(np.zeros(shape), requires_grad=True) if zero else _conv_init(rng, shape)
    )
    params[f"{name}.b"] = Tensor(np.zeros(cout), requires_grad=True)
    if norm:
        params[f"{name}.gamma"] = Tensor(np.ones(cout), requires_grad=True)
        params[f"{name}.beta"] = Tensor(np.zeros(cout), requires_grad=True)


def build_generator(cfg: GeneratorConfig, seed: int) -> ModelParams:
    """Seeded N(0, 0.02^2) conv weights, identity affine norms, zeroed final layer."""
    rng = spawn_rng("generator", seed)
    p: ModelParams = {}
    hc, rc, k = cfg.head_channels, cfg.res_channels, cfg.res_kernel
    _add_conv(p, rng, "head", 3, hc, cfg.head_kernel)
    if cfg.scale_factor == 2:
        _add_conv(p, rng, "down.conv", hc, rc, cfg.head_kernel, norm=False)
        _add_conv(p, rng, "down.pool", hc, rc, 1, norm=False)
        p["down.gamma"] = Tensor(np.ones(rc), requires_grad=True)
        p["down.beta"] = Tensor(np.zeros(rc), requires_grad=True)
    else:
        _add_conv(p, rng, "down.conv", hc, rc, cfg.head_kernel)
    for b in range(cfg.res_blocks):
        for u in range(4):
            _add_conv(p, rng, f"res{b}.conv{u}", rc, rc, k)
    if cfg.scale_factor == 2:
        _add_conv(p, rng, "up.shuffle", rc, 4 * hc, 1, norm=False)
        p["up.tconv.w"] = _conv_init(rng, (rc, hc, 4, 4))
        p["up.tconv.b"] = Tensor(np.zeros(hc), requires_grad=True)
        p["up.gamma"] = Tensor(np.ones(hc), requires_grad=True)
        p["up.beta"] = Tensor(np.zeros(hc), requires_grad=True)
    else:
        _add_conv(p, rng, "up.conv", rc, hc, cfg.head_kernel)
    _add_conv(p, rng, "rear", hc, hc, cfg.head_kernel)
    _add_conv(p, rng, "out", hc, 3, cfg.head_kernel, norm=False, zero=True)
    return p


def generator_param_count(cfg: GeneratorConfig) -> int:
    """Closed-form size of the parameter vector built by build_generator."""
    hc, rc, hk, rk = cfg.head_channels, cfg.res_channels, cfg.head_kernel, cfg.res_kernel
    conv = lambda cin, cout, k, norm: cout * cin * k * k + cout + (2 * cout if norm else 0)
    total = conv(3, hc, hk, True)
    if cfg.scale_factor == 2:
        total += conv(hc, rc, hk, False) + conv(hc, rc, 1, False) + 2 * rc
        total += conv(rc, 4 * hc, 1, False) + (rc * hc * 16 + hc) + 2 * hc
    else:
        total += conv(hc, rc, hk, True) + conv(rc, hc, hk, True)
    total += cfg.res_blocks * 4 * conv(rc, rc, rk, True)
    total += conv(hc, hc, hk, True) + conv(hc, 3, hk, False)
    return total


def _bias(t: Tensor, b: Tensor) -> Tensor:
    return t + b.reshape((1, b.shape[0], 1, 1))


def _conv_unit(p, name, x, k, alpha, stride=1):
    pad = (k - 1) // 2
    y = _bias(ad.conv2d(x, p[f"{name}.w"], stride=stride, padding=pad), p[f"{name}.b"])
    y = ad.instance_norm(y, p[f"{name}.gamma"], p[f"{name}.beta"])
    return ad.leaky_relu(y, alpha)


def generator_forward(
    params: ModelParams,
    blurred: Tensor,
    cfg: GeneratorConfig,
    training: bool = False,
    seed: int = 0,
) -> Tensor:
    """Restore a blurred batch; output = clamp(blurred + residual, 0, 1)."""
    n, c, h, w = blurred.shape
    s = cfg.scale_factor
    if h % s or w % s:
        raise ValueError(f"input extent {h}x{w} not divisible by scale factor {s}")
    a = cfg.leaky_alpha
    hk_pad = (cfg.head_kernel - 1) // 2

    x = _conv_unit(params, "head", blurred, cfg.head_kernel, a)
    if s == 2:
        branch_conv = _bias(
            ad.conv2d(x, params["down.conv.w"], stride=2, padding=hk_pad),
            params["down.conv.b"],
        )
        branch_pool = _bias(
            ad.conv2d(ad.avg_pool2d(x), params["down.pool.w"], stride=1, padding=0),
            params["down.pool.b"],
        )
        x = ad.instance_norm(branch_conv + branch_pool, params["down.gamma"], params["down.beta"])
        x = ad.leaky_relu(x, a)
    else:
        x = _conv_unit(params, "down.conv", x, cfg.head_kernel, a)

    carry = None
    drop = lambda t, tag: ad.dropout(
        t, cfg.dropout_p, training, seed=derive_seed("gen-drop", seed, tag)
    )
    for b in range(cfg.res_blocks):
        a1 = drop(_conv_unit(params, f"res{b}.conv0", x, cfg.res_kernel, a), (b, 0))
        if carry is not None:
            a1 = a1 + carry
        a2 = drop(_conv_unit(params, f"res{b}.conv1", a1, cfg.res_kernel, a), (b, 1))
        a3 = drop(_conv_unit(params, f"res{b}.conv2", a2, cfg.res_kernel, a), (b, 2))
        carry = a3
        a4 = drop(_conv_unit(params, f"res{b}.conv3", a3, cfg.res_kernel, a), (b, 3))
        x = x + a4

    if s == 2:
        shuffled = ad.pixel_shuffle(
            _bias(ad.conv2d(x, params["up.shuffle.w"], 1, 0), params["up.shuffle.b"]), 2
        )
        upconv = _bias(
            ad.conv2d_transpose(x, params["up.tconv.w"], stride=2, padding=1),
            params["up.tconv.b"],
        )
        x = ad.instance_norm(shuffled + upconv, params["up.gamma"], params["up.beta"])
        x = ad.leaky_relu(x, a)
    else:
        x = _conv_unit(params, "up.conv", x, cfg.head_kernel, a)

    x = _conv_unit(params, "rear", x, cfg.head_kernel, a)
    residual = _bias(
        ad.conv2d(x, params["out.w"], stride=1, padding=hk_pad), params["out.b"]
    )
    return ad.clamp(blurred + residual, 0.0, 1.0)


def _disc_plan(cfg: DiscriminatorConfig) -> list[tuple[int, int]]:
    """(out_channels, stride) per layer; stride 2 on every second layer until
    the downsample budget is spent; channels double after each stride-2."""
    plan = []
    ch = cfg.base_channels
    used = 0
    for layer in range(1, cfg.layers + 1):
        stride = 2 if (layer % 2 == 0 and used < cfg.downsample_layers) else 1
        if stride == 2:
            used += 1
            ch = min(ch * 2, cfg.base_channels * cfg.channel_cap_factor)
        out_ch = 1 if layer == cfg.layers else ch
        plan.append((out_ch, stride))
    return plan


def build_discriminator(cfg: DiscriminatorConfig, seed: int) -> ModelParams:
    rng = spawn_rng("discriminator", seed)
    p: ModelParams = {}
    cin = 3
    plan = _disc_plan(cfg)
    for layer, (cout, _) in enumerate(plan, start=1):
        norm = layer not in (1, cfg.layers)
        _add_conv(p, rng, f"d{layer}", cin, cout, 3, norm=norm)
        cin = cout
    return p


def discriminator_param_count(cfg: DiscriminatorConfig) -> int:
    total = 0
    cin = 3
    for layer, (cout, _) in enumerate(_disc_plan(cfg), start=1):
        total += cout * cin * 9 + cout
        if layer not in (1, cfg.layers):
            total += 2 * cout
        cin = cout
    return total


def discriminator_forward(
    params: ModelParams,
    images: Tensor,
    cfg: DiscriminatorConfig,
    pad_mode: str = "zeros",
) -> Tensor:
    """Unbounded patch score map (N, 1, h', w'); no sigmoid (Wasserstein critic).

    pad_mode "circular" makes every conv wrap-padded, which renders the whole
    critic exactly equivariant to cyclic shifts (used by the patch-property
    probe).
    """
    if pad_mode not in ("zeros", "circular"):
        raise ValueError(f"unknown pad_mode {pad_mode!r}")
    x = images
    plan = _disc_plan(cfg)
    for layer, (cout, stride) in enumerate(plan, start=1):
        if pad_mode == "circular":
            x = ad.conv2d(ad.circular_pad(x, 1), params[f"d{layer}.w"], stride=stride, padding=0)
            x = _bias(x, params[f"d{layer}.b"])
        else:
            x = _bias(
                ad.conv2d(x, params[f"d{layer}.w"], stride=stride, padding=1),
                params[f"d{layer}.b"],
            )
        if layer == cfg.layers:
            break
        if layer != 1:
            x = ad.instance_norm(x, params[f"d{layer}.gamma"], params[f"d{layer}.beta"])
        x = ad.leaky_relu(x, cfg.leaky_alpha)
    return x


def discriminator_receptive_field(cfg: DiscriminatorConfig) -> int:
    """Input pixels seen by one score cell."""
    rf = 1
    stride_product = 1
    for _, stride in _disc_plan(cfg):
        rf += 2 * stride_product  # (k-1) with k=3
        stride_product *= stride
    return rf


def zeroed_like(params: ModelParams) -> ModelParams:
    return {k: Tensor(np.zeros_like(v.data), requires_grad=True) for k, v in params.items()}
