"""Run configuration: documented defaults, a flat key = value file format,
and command-line overrides (highest precedence). Unknown keys are rejected.
"""

from __future__ import annotations

from pathlib import Path

from .degrade import SamplerRanges
from .loss import LossConfig
from .model import DiscriminatorConfig, GeneratorConfig
from .train import TrainConfig


class ConfigError(ValueError):
    pass


# every knob a run can turn, with its default; types are inferred from these
DEFAULTS: dict[str, object] = {
    # generator
    "head_channels": 32,
    "head_kernel": 7,
    "res_blocks": 3,
    "res_channels": 16,
    "res_kernel": 5,
    "dropout_p": 0.5,
    "leaky_alpha": 0.1,
    "scale_factor": 2,
    # discriminator
    "disc_layers": 10,
    "disc_base_channels": 16,
    # loss
    "lambda_gp": 10.0,
    "perceptual_weight": 100.0,
    "perceptual_layer_stage": 2,
    "perceptual_layer_conv": 2,
    # optimization
    "learning_rate": 0.0002,
    "beta1": 0.5,
    "beta2": 0.999,
    "adam_eps": 1e-8,
    "batch_size": 4,
    "epochs": 240,
    "critic_iters": 5,
    "checkpoint_every": 100,
    "max_iters": 0,  # 0 = bounded by epochs only
    # dataset
    "resolution": 64,
    "motion_length_min": 3.0,
    "motion_length_max": 21.0,
    "shake_length_min": 3.0,
    "shake_length_max": 21.0,
    "defocus_radius_min": 1.0,
    "defocus_radius_max": 5.0,
    "gaussian_sigma_min": 0.0,
    "gaussian_sigma_max": 0.05,
    "poisson_peak_min": 200.0,
    "poisson_peak_max": 2000.0,
    "impulse_density_min": 0.0,
    "impulse_density_max": 0.05,
    "max_kernels": 3,
    "max_kernel_extent": 0,  # 0 = resolution - 1
    # evaluation
    "wiener_nsr": 0.01,
}


def _coerce(key: str, raw: str):
    default = DEFAULTS[key]
    try:
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r}: {exc}") from exc
    return raw


def parse_config_file(path) -> dict[str, object]:
    """Flat `key = value` lines; blank lines and # comments ignored."""
    values: dict[str, object] = {}
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{path}:{lineno}: expected key = value, got {line!r}")
        key, _, raw = body.partition("=")
        key, raw = key.strip(), raw.strip()
        if key not in DEFAULTS:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = _coerce(key, raw)
    return values


def resolve(config_file=None, overrides: list[str] | None = None) -> dict[str, object]:
    """defaults <- file <- overrides ("key=value" strings)."""
    cfg = dict(DEFAULTS)
    if config_file is not None:
        cfg.update(parse_config_file(config_file))
    for item in overrides or []:
        key, sep, raw = item.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        cfg[key] = _coerce(key, raw.strip())
    return cfg


def format_resolved(cfg: dict[str, object], seed: int) -> str:
    lines = ["# resolved configuration", f"seed = {seed}"]
    lines += [f"{k} = {cfg[k]}" for k in sorted(cfg)]
    return "\n".join(lines)


def generator_config(cfg: dict) -> GeneratorConfig:
    return GeneratorConfig(
        head_channels=cfg["head_channels"],
        head_kernel=cfg["head_kernel"],
        res_blocks=cfg["res_blocks"],
        res_channels=cfg["res_channels"],
        res_kernel=cfg["res_kernel"],
        dropout_p=cfg["dropout_p"],
        leaky_alpha=cfg["leaky_alpha"],
        scale_factor=cfg["scale_factor"],
    )


def discriminator_config(cfg: dict) -> DiscriminatorConfig:
    return DiscriminatorConfig(
        layers=cfg["disc_layers"],
        base_channels=cfg["disc_base_channels"],
        leaky_alpha=cfg["leaky_alpha"],
    )


def loss_config(cfg: dict) -> LossConfig:
    return LossConfig(
        lambda_gp=cfg["lambda_gp"],
        perceptual_layer=(cfg["perceptual_layer_stage"], cfg["perceptual_layer_conv"]),
        perceptual_weight=cfg["perceptual_weight"],
        critic_iters_per_gen=cfg["critic_iters"],
    )


def train_config(cfg: dict, seed: int) -> TrainConfig:
    return TrainConfig(
        learning_rate=cfg["learning_rate"],
        beta1=cfg["beta1"],
        beta2=cfg["beta2"],
        adam_eps=cfg["adam_eps"],
        batch_size=cfg["batch_size"],
        epochs=cfg["epochs"],
        critic_iters=cfg["critic_iters"],
        seed=seed,
        checkpoint_every=cfg["checkpoint_every"],
        max_iters=cfg["max_iters"] or None,
    )


def sampler_ranges(cfg: dict) -> SamplerRanges:
    max_extent = cfg["max_kernel_extent"] or min(63, cfg["resolution"] - 1)
    return SamplerRanges(
        motion_length=(cfg["motion_length_min"], cfg["motion_length_max"]),
        shake_length=(cfg["shake_length_min"], cfg["shake_length_max"]),
        defocus_radius=(cfg["defocus_radius_min"], cfg["defocus_radius_max"]),
        gaussian_sigma=(cfg["gaussian_sigma_min"], cfg["gaussian_sigma_max"]),
        poisson_peak=(cfg["poisson_peak_min"], cfg["poisson_peak_max"]),
        impulse_density=(cfg["impulse_density_min"], cfg["impulse_density_max"]),
        max_kernels=cfg["max_kernels"],
        max_extent=max_extent,
    )
