"""Adam optimization with alternating critic/generator steps.

Batch order, dropout masks, and interpolation draws are all pure functions of
(master seed, iteration counters), so a run is reproducible from its config
and a checkpoint restart continues the exact parameter trajectory.
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .degrade import ImagePair
from .loss import FeatureExtractor, LossConfig, gradient_penalty, perceptual_loss
from .model import (
    DiscriminatorConfig,
    GeneratorConfig,
    ModelParams,
    build_discriminator,
    build_generator,
    discriminator_forward,
    generator_forward,
)
from .seeding import derive_seed, spawn_rng


class TrainingDiverged(RuntimeError):
    """A loss term stopped being finite; names the offending term."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.0002
    beta1: float = 0.5
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 4
    epochs: int = 240
    critic_iters: int = 5
    seed: int = 0
    checkpoint_every: int = 100
    max_iters: Optional[int] = None  # cap on generator cycles, None = epoch budget

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.critic_iters < 1:
            raise ValueError("critic_iters must be >= 1")


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def for_params(cls, params: ModelParams) -> "AdamState":
        return cls(
            m={k: np.zeros_like(t.data) for k, t in params.items()},
            v={k: np.zeros_like(t.data) for k, t in params.items()},
        )


def adam_step(
    params: ModelParams,
    grads: dict[str, Tensor],
    state: AdamState,
    cfg: TrainConfig,
) -> ModelParams:
    """Bias-corrected Adam; returns fresh parameter tensors, mutates state."""
    state.step += 1
    t = state.step
    b1, b2 = cfg.beta1, cfg.beta2
    out: ModelParams = {}
    for name, p in params.items():
        g = grads[name].data
        state.m[name] = b1 * state.m[name] + (1 - b1) * g
        state.v[name] = b2 * state.v[name] + (1 - b2) * g * g
        m_hat = state.m[name] / (1 - b1**t)
        v_hat = state.v[name] / (1 - b2**t)
        out[name] = Tensor(
            p.data - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps),
            requires_grad=True,
        )
    return out


# -- checkpoint format --------------------------------------------------------

CHECKPOINT_MAGIC = b"DFCK"
CHECKPOINT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


class CorruptCheckpointError(CheckpointError):
    pass


class UnsupportedVersionError(CheckpointError):
    pass


def write_tensor_file(tensors: dict[str, np.ndarray], path) -> None:
    """Binary format: magic, version byte, then per-tensor records of
    (u16 LE name length, name bytes, u8 rank, u64 LE extents, f64 LE values).
    """
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(bytes([CHECKPOINT_VERSION]))
        for name in sorted(tensors):
            arr = np.asarray(tensors[name], dtype="<f8")
            enc = name.encode("utf-8")
            fh.write(struct.pack("<H", len(enc)))
            fh.write(enc)
            fh.write(bytes([arr.ndim]))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes(order="C"))


def read_tensor_file(path) -> dict[str, np.ndarray]:
    blob = Path(path).read_bytes()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise CorruptCheckpointError(f"{path}: bad magic {blob[:4]!r}")
    if len(blob) < 5 or blob[4] != CHECKPOINT_VERSION:
        raise UnsupportedVersionError(
            f"{path}: version {blob[4] if len(blob) > 4 else '?'} unsupported"
        )
    tensors: dict[str, np.ndarray] = {}
    off = 5
    while off < len(blob):
        try:
            (name_len,) = struct.unpack_from("<H", blob, off)
            off += 2
            name = blob[off : off + name_len].decode("utf-8")
            if len(blob[off : off + name_len]) != name_len:
                raise struct.error("truncated name")
            off += name_len
            rank = blob[off]
            off += 1
            shape = struct.unpack_from(f"<{rank}Q", blob, off)
            off += 8 * rank
            count = int(np.prod(shape)) if rank else 1
            data = np.frombuffer(blob, dtype="<f8", count=count, offset=off)
            if data.size != count:
                raise struct.error("truncated values")
            off += 8 * count
        except (struct.error, IndexError, ValueError) as exc:
            raise CorruptCheckpointError(f"{path}: truncated or corrupt record: {exc}") from exc
        tensors[name] = data.reshape(shape).copy()
    return tensors


@dataclass
class Checkpoint:
    params_g: ModelParams
    params_d: ModelParams
    opt_g: AdamState
    opt_d: AdamState
    extra: dict[str, float]


def save_checkpoint(
    params_g: ModelParams,
    params_d: ModelParams,
    opt_states: tuple[AdamState, AdamState],
    path,
    extra: Optional[dict[str, float]] = None,
) -> None:
    opt_g, opt_d = opt_states
    flat: dict[str, np.ndarray] = {}
    for prefix, params in (("g", params_g), ("d", params_d)):
        for k, t in params.items():
            flat[f"{prefix}/{k}"] = t.data
    for prefix, st in (("og", opt_g), ("od", opt_d)):
        for k, a in st.m.items():
            flat[f"{prefix}/m/{k}"] = a
        for k, a in st.v.items():
            flat[f"{prefix}/v/{k}"] = a
        flat[f"{prefix}/step"] = np.asarray(float(st.step))
    for k, v in (extra or {}).items():
        flat[f"x/{k}"] = np.asarray(float(v))
    write_tensor_file(flat, path)


def load_checkpoint(path) -> Checkpoint:
    flat = read_tensor_file(path)
    params_g: ModelParams = {}
    params_d: ModelParams = {}
    opt = {"og": AdamState({}, {}), "od": AdamState({}, {})}
    extra: dict[str, float] = {}
    for name, arr in flat.items():
        head, _, rest = name.partition("/")
        if head == "g":
            params_g[rest] = Tensor(arr, requires_grad=True)
        elif head == "d":
            params_d[rest] = Tensor(arr, requires_grad=True)
        elif head in ("og", "od"):
            kind, _, pname = rest.partition("/")
            if kind == "step":
                opt[head].step = int(arr)
            elif kind == "m":
                opt[head].m[pname] = arr
            elif kind == "v":
                opt[head].v[pname] = arr
            else:
                raise CorruptCheckpointError(f"{path}: unknown optimizer record {name!r}")
        elif head == "x":
            extra[rest] = float(arr)
        else:
            raise CorruptCheckpointError(f"{path}: unknown record namespace {name!r}")
    return Checkpoint(params_g, params_d, opt["og"], opt["od"], extra)


# -- training loop ------------------------------------------------------------


@dataclass
class TrainLog:
    rows: list[tuple] = field(default_factory=list)

    HEADER = "iter,critic_loss,gen_loss,gp,perceptual,seconds"

    def append(self, iteration, critic_loss_v, gen_loss_v, gp_v, perceptual_v, seconds):
        if self.rows and iteration <= self.rows[-1][0]:
            raise ValueError("iterations must be strictly increasing")
        self.rows.append((iteration, critic_loss_v, gen_loss_v, gp_v, perceptual_v, seconds))

    def to_csv(self) -> str:
        lines = [self.HEADER]
        for it, cl, gl, gp, pc, sec in self.rows:
            vals = ",".join(format(v, ".9g") for v in (cl, gl, gp, pc, sec))
            lines.append(f"{it},{vals}")
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_csv())


def _check_finite(value: float, term: str, iteration: int) -> float:
    if not np.isfinite(value):
        raise TrainingDiverged(f"{term} became {value} at iteration {iteration}")
    return value


def _batches(n_pairs: int, cfg: TrainConfig):
    """Stateless batch index stream: epoch-shuffled, partial batch dropped."""
    per_epoch = n_pairs // cfg.batch_size
    if per_epoch == 0:
        raise ValueError(
            f"dataset of {n_pairs} pairs smaller than batch size {cfg.batch_size}"
        )

    def batch(global_idx: int) -> np.ndarray:
        epoch, slot = divmod(global_idx, per_epoch)
        perm = spawn_rng("shuffle", cfg.seed, epoch).permutation(n_pairs)
        return perm[slot * cfg.batch_size : (slot + 1) * cfg.batch_size]

    return batch, per_epoch


def _stack(pairs: Sequence[ImagePair], idx: np.ndarray):
    sharp = Tensor(np.stack([pairs[i].sharp for i in idx]))
    blurred = Tensor(np.stack([pairs[i].blurred for i in idx]))
    return sharp, blurred


def generator_cfg_extra(cfg: GeneratorConfig) -> dict[str, float]:
    """Numeric generator config fields, stored in checkpoints for reloading."""
    return {
        "cfg.head_channels": cfg.head_channels,
        "cfg.head_kernel": cfg.head_kernel,
        "cfg.res_blocks": cfg.res_blocks,
        "cfg.res_channels": cfg.res_channels,
        "cfg.res_kernel": cfg.res_kernel,
        "cfg.dropout_p": cfg.dropout_p,
        "cfg.leaky_alpha": cfg.leaky_alpha,
        "cfg.scale_factor": cfg.scale_factor,
    }


def generator_cfg_from_extra(extra: dict[str, float]) -> GeneratorConfig:
    if "cfg.head_channels" not in extra:
        raise CheckpointError("checkpoint carries no generator configuration")
    return GeneratorConfig(
        head_channels=int(extra["cfg.head_channels"]),
        head_kernel=int(extra["cfg.head_kernel"]),
        res_blocks=int(extra["cfg.res_blocks"]),
        res_channels=int(extra["cfg.res_channels"]),
        res_kernel=int(extra["cfg.res_kernel"]),
        dropout_p=extra["cfg.dropout_p"],
        leaky_alpha=extra["cfg.leaky_alpha"],
        scale_factor=int(extra["cfg.scale_factor"]),
    )


def train(
    pairs: Sequence[ImagePair],
    gen_cfg: GeneratorConfig,
    disc_cfg: DiscriminatorConfig,
    loss_cfg: LossConfig,
    train_cfg: TrainConfig,
    out_dir,
    clock: Callable[[], float] = time.perf_counter,
    resume: Optional[str] = None,
) -> tuple[Path, TrainLog]:
    """Alternating optimization; writes checkpoints and the loss CSV.

    Per cycle: ``critic_iters`` critic updates, then one generator update.
    Returns (final checkpoint path, log).
    """
    if not pairs:
        raise ValueError("training dataset is empty")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    seed = train_cfg.seed
    if resume is not None:
        ck = load_checkpoint(resume)
        params_g, params_d = ck.params_g, ck.params_d
        opt_g, opt_d = ck.opt_g, ck.opt_d
        start_iter = int(ck.extra.get("iteration", 0))
    else:
        params_g = build_generator(gen_cfg, derive_seed(seed, "g-init"))
        params_d = build_discriminator(disc_cfg, derive_seed(seed, "d-init"))
        opt_g = AdamState.for_params(params_g)
        opt_d = AdamState.for_params(params_d)
        start_iter = 0

    extractor = FeatureExtractor(derive_seed(seed, "extractor"))
    next_batch, per_epoch = _batches(len(pairs), train_cfg)
    draws_per_cycle = train_cfg.critic_iters + 1
    total_cycles = (train_cfg.epochs * per_epoch) // draws_per_cycle
    if train_cfg.max_iters is not None:
        total_cycles = min(total_cycles, train_cfg.max_iters)

    log = TrainLog()
    g_leaves = lambda: list(params_g.values())
    d_leaves = lambda: list(params_d.values())

    for it in range(start_iter, total_cycles):
        t0 = clock()
        critic = lambda imgs: discriminator_forward(params_d, imgs, disc_cfg)

        closs_v = gp_v = 0.0
        for j in range(train_cfg.critic_iters):
            sharp, blurred = _stack(pairs, next_batch(it * draws_per_cycle + j))
            with ad.no_grad():
                fake = generator_forward(
                    params_g, blurred, gen_cfg, training=True,
                    seed=derive_seed(seed, "g-sample", it, j),
                )
            fake = Tensor(fake.data)
            wasserstein = critic(fake).mean() - critic(sharp).mean()
            gp = gradient_penalty(
                critic, sharp, fake, loss_cfg.lambda_gp, seed=derive_seed(seed, "gp", it, j)
            )
            closs = wasserstein + gp
            closs_v = _check_finite(closs.item(), "critic loss", it + 1)
            gp_v = _check_finite(gp.item(), "gradient penalty", it + 1)
            grads = ad.grad(closs, d_leaves())
            params_d = adam_step(params_d, dict(zip(params_d.keys(), grads)), opt_d, train_cfg)
            critic = lambda imgs: discriminator_forward(params_d, imgs, disc_cfg)

        sharp, blurred = _stack(pairs, next_batch(it * draws_per_cycle + train_cfg.critic_iters))
        generated = generator_forward(
            params_g, blurred, gen_cfg, training=True, seed=derive_seed(seed, "g-train", it)
        )
        adv = -critic(generated).mean()
        content = perceptual_loss(extractor, sharp, generated, loss_cfg.perceptual_layer)
        gloss = adv + Tensor(np.asarray(loss_cfg.perceptual_weight)) * content
        gloss_v = _check_finite(gloss.item(), "generator loss", it + 1)
        content_v = _check_finite(content.item(), "perceptual term", it + 1)
        grads = ad.grad(gloss, g_leaves())
        params_g = adam_step(params_g, dict(zip(params_g.keys(), grads)), opt_g, train_cfg)

        log.append(it + 1, closs_v, gloss_v, gp_v, content_v, clock() - t0)

        if train_cfg.checkpoint_every and (it + 1) % train_cfg.checkpoint_every == 0:
            save_checkpoint(
                params_g, params_d, (opt_g, opt_d),
                out / f"checkpoint_{it + 1:06d}.ckpt",
                extra={"iteration": it + 1, **generator_cfg_extra(gen_cfg)},
            )

    final = out / "checkpoint_final.ckpt"
    save_checkpoint(
        params_g, params_d, (opt_g, opt_d), final,
        extra={"iteration": total_cycles, **generator_cfg_extra(gen_cfg)},
    )
    log.write(out / "train_log.csv")
    return final, log
