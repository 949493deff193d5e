"""Command-line entry point.

Subcommands: kernel, dataset, train, infer, eval. Every command accepts
--config (flat key = value file), repeatable --set key=value overrides, and
--seed; the fully resolved configuration is printed before execution so any
artifact can be reproduced from the logged lines.

Exit codes: 0 success, 1 runtime/data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import config as C
from . import degrade as dg
from . import evaluate as ev
from . import psf
from . import train as tr
from .images import ImageReadError, load_image, save_image, to_grayscale_png
from .model import build_generator
from .seeding import derive_seed

RUNTIME_ERRORS = (
    C.ConfigError,
    dg.DegradeError,
    psf.KernelError,
    tr.CheckpointError,
    tr.TrainingDiverged,
    ImageReadError,
    OSError,
    ValueError,
)


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=0, help="master seed for this invocation")
    p.add_argument("--config", default=None, help="key = value configuration file")
    p.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one configuration key (repeatable)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deblurlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    k = sub.add_parser("kernel", help="write one blur kernel as text grid + PNG")
    k.add_argument("--type", required=True, choices=("motion", "shake", "defocus"))
    k.add_argument("--length", type=float, help="motion/shake length in pixels")
    k.add_argument("--angle-deg", type=float, default=0.0, help="motion angle in degrees")
    k.add_argument("--radius", type=float, help="defocus disk radius in pixels")
    k.add_argument("--control-points", type=int, default=3, help="shake control points")
    k.add_argument("--size", type=int, required=True, help="odd kernel grid size")
    k.add_argument("--out", required=True, help="output text-grid path (PNG gets .png)")
    _add_common(k)

    d = sub.add_parser("dataset", help="generate paired sharp/blurred training data")
    d.add_argument("--sharp-dir", required=True)
    d.add_argument("--n-pairs", type=int, required=True)
    d.add_argument("--out-dir", required=True)
    _add_common(d)

    t = sub.add_parser("train", help="train the restoration network on a dataset")
    t.add_argument("--dataset", required=True, help="directory holding manifest.txt")
    t.add_argument("--out-dir", required=True)
    t.add_argument("--resume", default=None, help="checkpoint to continue from")
    _add_common(t)

    i = sub.add_parser("infer", help="restore one image or a directory of images")
    i.add_argument("--checkpoint", required=True)
    i.add_argument("--input", required=True)
    i.add_argument("--out", required=True)
    _add_common(i)

    e = sub.add_parser("eval", help="metrics report plus side-by-side triptychs")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--dataset", required=True)
    e.add_argument("--out-dir", required=True)
    _add_common(e)
    return parser


def _resolve_and_print(args) -> dict:
    cfg = C.resolve(args.config, args.overrides)
    print(C.format_resolved(cfg, args.seed))
    return cfg


def cmd_kernel(args) -> int:
    _resolve_and_print(args)
    if args.type == "motion":
        if args.length is None:
            raise C.ConfigError("--length is required for motion kernels")
        k = psf.motion_kernel(
            psf.MotionBlurSpec(args.length, math.radians(args.angle_deg)), args.size
        )
    elif args.type == "defocus":
        if args.radius is None:
            raise C.ConfigError("--radius is required for defocus kernels")
        k = psf.defocus_kernel(psf.DefocusSpec(args.radius), args.size)
    else:
        if args.length is None:
            raise C.ConfigError("--length is required for shake kernels")
        k = psf.shake_kernel(
            psf.ShakeSpec(args.control_points, args.length, seed=args.seed), args.size
        )
    psf.save_kernel(k, args.out)
    to_grayscale_png(str(args.out) + ".png", k.values)
    print(f"kernel written to {args.out}")
    return 0


def cmd_dataset(args) -> int:
    cfg = _resolve_and_print(args)
    manifest = dg.make_dataset(
        args.sharp_dir,
        args.n_pairs,
        args.seed,
        args.out_dir,
        resolution=cfg["resolution"],
        ranges=C.sampler_ranges(cfg),
    )
    print(f"manifest written to {manifest}")
    return 0


def _plot_losses(log: tr.TrainLog, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = np.asarray([r[:5] for r in log.rows], dtype=np.float64)
    fig, ax = plt.subplots(figsize=(7, 4))
    for col, label in ((1, "critic"), (2, "generator"), (3, "gradient penalty"), (4, "perceptual")):
        ax.plot(rows[:, 0], rows[:, col], label=label)
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def cmd_train(args) -> int:
    cfg = _resolve_and_print(args)
    pairs = dg.load_dataset(args.dataset)
    final, log = tr.train(
        pairs,
        C.generator_config(cfg),
        C.discriminator_config(cfg),
        C.loss_config(cfg),
        C.train_config(cfg, args.seed),
        args.out_dir,
        resume=args.resume,
    )
    if log.rows:
        _plot_losses(log, Path(args.out_dir) / "loss_curve.png")
    print(f"final checkpoint: {final}")
    return 0


def _load_generator(checkpoint_path):
    ck = tr.load_checkpoint(checkpoint_path)
    return ck.params_g, tr.generator_cfg_from_extra(ck.extra)


def cmd_infer(args) -> int:
    _resolve_and_print(args)
    params_g, gen_cfg = _load_generator(args.checkpoint)
    from . import autodiff as ad
    from .model import generator_forward

    src = Path(args.input)
    if not src.exists():
        raise ImageReadError(f"input path does not exist: {src}")
    if src.is_dir():
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        targets = [(p, out_dir / p.name) for p in sorted(src.iterdir()) if p.suffix.lower() in dg.IMAGE_SUFFIXES]
    else:
        targets = [(src, Path(args.out))]
    for in_path, out_path in targets:
        img = load_image(in_path)
        with ad.no_grad():
            restored = generator_forward(params_g, ad.tensor(img[None]), gen_cfg).data[0]
        out_path.parent.mkdir(parents=True, exist_ok=True)
        save_image(out_path, restored)
        print(f"restored {in_path} -> {out_path}")
    return 0


def cmd_eval(args) -> int:
    cfg = _resolve_and_print(args)
    params_g, gen_cfg = _load_generator(args.checkpoint)
    pairs = dg.load_dataset(args.dataset)
    report = ev.evaluate(params_g, gen_cfg, pairs, out_dir=args.out_dir, nsr=cfg["wiener_nsr"])
    print(f"report written to {Path(args.out_dir) / 'report.csv'}")
    for attr in ("psnr_blur", "psnr_restored", "ssim_restored", "psnr_wiener"):
        print(f"mean {attr}: {report.mean(attr):.4f}")
    return 0


COMMANDS = {
    "kernel": cmd_kernel,
    "dataset": cmd_dataset,
    "train": cmd_train,
    "infer": cmd_infer,
    "eval": cmd_eval,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except RUNTIME_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
