"""Loss stack: reference cross-entropy GAN loss, Wasserstein critic loss with
gradient penalty, feature-space (perceptual) loss, and the generator total.

The critic trains on the duality difference mean D(fake) - mean D(real) plus
lambda * (||grad_xhat D(xhat)||_2 - 1)^2 on real/fake interpolates; the
generator maximizes its critic score (non-saturating form) while a frozen
random convolutional feature extractor supplies the content term.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .seeding import spawn_rng

Critic = Callable[[Tensor], Tensor]


@dataclass(frozen=True)
class LossConfig:
    lambda_gp: float = 10.0
    perceptual_layer: tuple[int, int] = (2, 2)
    perceptual_weight: float = 100.0
    critic_iters_per_gen: int = 5

    def __post_init__(self):
        if self.lambda_gp < 0 or self.perceptual_weight < 0:
            raise ValueError("loss weights must be non-negative")


def bce_gan_loss(d_real_probs: Tensor, d_fake_probs: Tensor) -> Tensor:
    """Reference cross-entropy objective over probabilities (test path only)."""
    for name, t in (("d_real_probs", d_real_probs), ("d_fake_probs", d_fake_probs)):
        if (t.data <= 0).any() or (t.data >= 1).any():
            raise ValueError(f"{name} must lie strictly inside (0, 1)")
    half = Tensor(np.asarray(0.5))
    return -(half * ad.log(d_real_probs).mean()) - (
        half * ad.log(1.0 - d_fake_probs).mean()
    )


def _per_sample_scores(scores: Tensor) -> Tensor:
    """Collapse a (N, ...) score map to one scalar per sample."""
    if scores.ndim == 1:
        return scores
    return scores.mean(axis=tuple(range(1, scores.ndim)))


def interpolate(x_real: Tensor, x_fake: Tensor, seed: int) -> Tensor:
    """xhat = eps*real + (1-eps)*fake with per-sample eps ~ Uniform(0,1)."""
    if x_real.shape != x_fake.shape:
        raise ValueError(f"batch shapes differ: {x_real.shape} vs {x_fake.shape}")
    n = x_real.shape[0]
    eps = spawn_rng("gp-eps", seed).random(n).reshape((n,) + (1,) * (x_real.ndim - 1))
    eps_t = Tensor(eps)
    mix = eps_t * x_real + (1.0 - eps_t) * x_fake
    out = Tensor(mix.data, requires_grad=True)
    return out


def gradient_penalty(
    critic: Critic, x_real: Tensor, x_fake: Tensor, lambda_gp: float = 10.0, seed: int = 0
) -> Tensor:
    """lambda * mean((||grad_xhat D(xhat)|| - 1)^2), twice differentiable."""
    x_hat = interpolate(x_real, x_fake, seed)
    scores = _per_sample_scores(critic(x_hat))
    (grads,) = ad.grad(scores.sum(), [x_hat], create_graph=True)
    sq = (grads * grads).sum(axis=tuple(range(1, grads.ndim)))
    norm = sq.sqrt()
    return Tensor(np.asarray(lambda_gp)) * ((norm - 1.0) ** 2).mean()


def critic_loss(
    critic: Critic, x_real: Tensor, x_fake: Tensor, lambda_gp: float = 10.0, seed: int = 0
) -> Tensor:
    """mean D(fake) - mean D(real) + gradient penalty (critic minimizes)."""
    if x_real.shape != x_fake.shape:
        raise ValueError(f"batch shapes differ: {x_real.shape} vs {x_fake.shape}")
    wasserstein = critic(x_fake).mean() - critic(x_real).mean()
    return wasserstein + gradient_penalty(critic, x_real, x_fake, lambda_gp, seed)


# -- perceptual loss ----------------------------------------------------------


@dataclass(frozen=True)
class ExtractorConfig:
    stage_channels: tuple[int, int, int] = (8, 16, 16)
    leaky_alpha: float = 0.1


class FeatureExtractor:
    """Frozen seeded conv net: two convs per stage, pooling between stages.

    Taps are addressed (i, j) = j-th conv activation inside stage i, the
    stages before the first and second pooling plus one post-pooling stage.
    """

    def __init__(self, seed: int = 0, cfg: ExtractorConfig = ExtractorConfig()):
        rng = spawn_rng("feature-extractor", seed)
        self.cfg = cfg
        self.weights: list[Tensor] = []
        self.biases: list[Tensor] = []
        cin = 3
        for stage_ch in cfg.stage_channels:
            for _ in range(2):
                fan_in = cin * 9
                w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(stage_ch, cin, 3, 3))
                self.weights.append(Tensor(w))
                self.biases.append(Tensor(np.zeros(stage_ch)))
                cin = stage_ch

    def features(self, x: Tensor, layer: tuple[int, int]) -> Tensor:
        i, j = layer
        if not (1 <= i <= 3 and 1 <= j <= 2):
            raise ValueError(f"tap {layer} out of range: stages 1..3, convs 1..2")
        idx = 0
        for stage in range(1, 4):
            for conv in range(1, 3):
                w, b = self.weights[idx], self.biases[idx]
                x = ad.conv2d(x, w, stride=1, padding=1) + b.reshape((1, b.shape[0], 1, 1))
                x = ad.leaky_relu(x, self.cfg.leaky_alpha)
                if (stage, conv) == (i, j):
                    return x
                idx += 1
            if stage < 3:
                x = ad.avg_pool2d(x)
        raise AssertionError("unreachable")


def perceptual_loss(
    extractor: FeatureExtractor, sharp: Tensor, generated: Tensor, layer: tuple[int, int] = (2, 2)
) -> Tensor:
    """Mean over batch of sum_c,x,y (phi(sharp) - phi(generated))^2 / (w*h)."""
    f_sharp = extractor.features(sharp, layer)
    f_gen = extractor.features(generated, layer)
    h, w = f_sharp.shape[2], f_sharp.shape[3]
    diff = f_sharp - f_gen
    per_sample = (diff * diff).sum(axis=(1, 2, 3)) * Tensor(np.asarray(1.0 / (w * h)))
    return per_sample.mean()


def generator_loss(
    critic: Critic,
    extractor: FeatureExtractor,
    sharp: Tensor,
    blurred: Tensor,
    generated: Tensor,
    cfg: LossConfig,
) -> Tensor:
    """-mean D(generated) + perceptual_weight * content term.

    ``blurred`` is the conditioning input that produced ``generated``; the
    unconditional critic does not consume it, it is part of the signature for
    conditional-critic variants.
    """
    adv = -critic(generated).mean()
    content = perceptual_loss(extractor, sharp, generated, cfg.perceptual_layer)
    return adv + Tensor(np.asarray(cfg.perceptual_weight)) * content
