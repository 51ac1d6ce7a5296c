"""Command-line surface: train, infer, eval, ablate, synth.

Every run writes a manifest (command, resolved config, git describe,
timestamp, seed) into the output directory before any computation so it can
be reproduced. Exit codes: 0 success, 1 usage, 2 data error, 3 numeric
failure. MCFNET_SEED serves as the seed fallback when neither flag nor
config file provides one.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import subprocess
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch

from .colorspace import ColorSpace, ImagePlane, hsv_to_rgb_array
from .data import (load_dataset, load_image_plane, make_synthetic_pairs,
                   save_image_plane, write_dataset)
from .errors import DataError, NumericError, UsageError
from .metrics import evaluate
from .trainer import (TrainConfig, apply_ablation, build_models,
                      load_checkpoint, train)

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunManifest:
    command: str
    config_path: str | None
    config: dict | None
    git_describe: str
    timestamp: str
    seed: int | None

    def write(self, out_dir: Path) -> None:
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "manifest.json", "w") as fh:
            json.dump(asdict(self), fh, indent=2)


def _git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"],
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"


def _write_manifest(command: str, out_dir: Path, config: dict | None = None,
                    config_path: str | None = None,
                    seed: int | None = None) -> None:
    RunManifest(
        command=command, config_path=config_path, config=config,
        git_describe=_git_describe(),
        timestamp=datetime.datetime.now(datetime.timezone.utc).isoformat(),
        seed=seed,
    ).write(out_dir)


def _check_out_dir(out_dir: Path, overwrite: bool) -> None:
    if (out_dir / "manifest.json").exists() and not overwrite:
        raise UsageError(
            f"{out_dir} already holds a run; pass --overwrite to replace it")


def _load_config_file(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"config file does not exist: {p}")
    try:
        if p.suffix == ".toml":
            with open(p, "rb") as fh:
                return tomllib.load(fh)
        if p.suffix == ".json":
            with open(p) as fh:
                return json.load(fh)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise UsageError(f"cannot parse config file {p}: {exc}") from exc
    raise UsageError(f"config file must be .toml or .json, got {p.suffix!r}")


def _resolve_config(args) -> tuple[TrainConfig, str | None]:
    raw = _load_config_file(args.config) if args.config else {}
    overrides = {
        "total_epochs": args.total_epochs,
        "stage1_end": args.stage1_end,
        "batch_size": args.batch_size,
        "base_lr": args.base_lr,
        "seed": args.seed,
    }
    for key, value in overrides.items():
        if value is not None:
            raw[key] = value
    if "seed" not in raw and os.environ.get("MCFNET_SEED"):
        raw["seed"] = int(os.environ["MCFNET_SEED"])
    try:
        config = TrainConfig.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid training config: {exc}") from exc
    return config, args.config


def _add_train_args(parser) -> None:
    parser.add_argument("--config", help="TOML or JSON TrainConfig file")
    parser.add_argument("--data", required=True,
                        help="dataset root holding nir/ and rgb/ subdirectories")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--overwrite", action="store_true",
                        help="allow reusing a non-empty output directory")
    parser.add_argument("--total-epochs", type=int, default=None)
    parser.add_argument("--stage1-end", type=int, default=None)
    parser.add_argument("--batch-size", type=int, default=None)
    parser.add_argument("--base-lr", type=float, default=None)
    parser.add_argument("--seed", type=int, default=None)


def _run_training(args, variant: str | None) -> int:
    config, config_path = _resolve_config(args)
    if variant is not None:
        config = apply_ablation(config, variant)
    out_dir = Path(args.out)
    _check_out_dir(out_dir, args.overwrite)
    _write_manifest("ablate" if variant else "train", out_dir,
                    config=config.to_dict(), config_path=config_path,
                    seed=config.seed)
    data_root = Path(args.data)
    dataset = load_dataset(data_root / "nir", data_root / "rgb",
                           allow_unpaired=True)
    result = train(config, dataset, out_dir=out_dir)
    print(f"trained {config.total_epochs} epochs; "
          f"checkpoint at {result.checkpoint_path}")
    return 0


def _cmd_train(args) -> int:
    return _run_training(args, variant=None)


def _cmd_ablate(args) -> int:
    return _run_training(args, variant=args.variant)


def _texture_to_unit(tex: np.ndarray) -> np.ndarray:
    # signed responses rendered symmetrically around mid-gray
    peak = float(np.abs(tex).max())
    if peak == 0.0:
        return np.full_like(tex, 0.5)
    return 0.5 + tex / (2.0 * peak)


def _cmd_infer(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    if ckpt.config is None:
        raise DataError(f"checkpoint {args.ckpt} carries no config snapshot")
    out_dir = Path(args.out)
    _check_out_dir(out_dir, args.overwrite)
    _write_manifest("infer", out_dir, config=ckpt.config.to_dict(),
                    seed=ckpt.config.seed)
    bundle = build_models(ckpt.config)
    ckpt.restore(bundle)
    bundle.train_mode(False)

    nir_dir = Path(args.nir)
    if not nir_dir.is_dir():
        raise DataError(f"directory does not exist: {nir_dir}")
    files = sorted(nir_dir.glob("*.png"))
    if not files:
        raise DataError(f"no PNG files found in {nir_dir}")
    for path in files:
        plane = load_image_plane(path, ColorSpace.NIR)
        x = torch.from_numpy(plane.data.transpose(2, 0, 1)).unsqueeze(0)
        with torch.no_grad():
            out = bundle.colorizer(x)
        rgb = out.y_rgb.squeeze(0).numpy().transpose(1, 2, 0)
        save_image_plane(ImagePlane(np.clip(rgb, 0.0, 1.0), ColorSpace.RGB),
                         out_dir / f"{path.stem}.png")
        if args.dump_branches:
            branches = out_dir / "branches"
            coarse = np.clip(
                out.y_prime_rgb.squeeze(0).numpy().transpose(1, 2, 0), 0, 1)
            save_image_plane(ImagePlane(coarse, ColorSpace.RGB),
                             branches / f"{path.stem}_coarse.png")
            hsv = out.y_hsv.squeeze(0).numpy().transpose(1, 2, 0)
            hsv_as_rgb = np.clip(hsv_to_rgb_array(np.clip(hsv, 0.0, 1.0)),
                                 0, 1)
            save_image_plane(ImagePlane(hsv_as_rgb, ColorSpace.RGB),
                             branches / f"{path.stem}_hsv.png")
            tex = np.clip(_texture_to_unit(
                out.y_tex.squeeze(0).numpy().transpose(1, 2, 0)), 0, 1)
            save_image_plane(ImagePlane(tex, ColorSpace.NIR),
                             branches / f"{path.stem}_texture.png")
            panels = [np.clip(rgb, 0, 1), coarse, hsv_as_rgb,
                      np.repeat(tex, 3, axis=2)]
            grid = np.concatenate(panels, axis=1).astype(np.float32)
            save_image_plane(ImagePlane(grid, ColorSpace.RGB),
                             branches / f"{path.stem}_grid.png")
    print(f"colorized {len(files)} image(s) into {out_dir}")
    return 0


def _cmd_eval(args) -> int:
    out_dir = Path(args.out)
    _check_out_dir(out_dir, args.overwrite)
    _write_manifest("eval", out_dir)
    report = evaluate(args.pred, args.gt, out_dir=out_dir)
    print(f"evaluated {len(report.per_image)} image(s): "
          f"psnr {report.mean_psnr:.2f} dB, ssim {report.mean_ssim:.4f}, "
          f"ae {report.mean_ae:.2f} deg")
    return 0


def _cmd_synth(args) -> int:
    seed = args.seed
    if seed is None:
        seed = int(os.environ.get("MCFNET_SEED", "0"))
    out_dir = Path(args.out)
    _check_out_dir(out_dir, args.overwrite)
    _write_manifest("synth", out_dir, seed=seed)
    pairs = make_synthetic_pairs(args.n, args.size, seed)
    write_dataset(pairs, out_dir)
    print(f"wrote {len(pairs)} synthetic pair(s) of {args.size}x{args.size} "
          f"into {out_dir}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="mcfnet",
                     description="NIR-to-RGB colorization toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train on a paired dataset")
    _add_train_args(p_train)
    p_train.set_defaults(func=_cmd_train)

    p_ablate = sub.add_parser("ablate", help="train an ablation variant")
    p_ablate.add_argument("--variant", required=True,
                          choices=["no-texture", "no-multiscale", "no-cfem",
                                   "full"])
    _add_train_args(p_ablate)
    p_ablate.set_defaults(func=_cmd_ablate)

    p_infer = sub.add_parser("infer", help="colorize a directory of NIR images")
    p_infer.add_argument("--ckpt", required=True)
    p_infer.add_argument("--nir", required=True)
    p_infer.add_argument("--out", required=True)
    p_infer.add_argument("--overwrite", action="store_true")
    p_infer.add_argument("--dump-branches", action="store_true",
                         help="also write coarse/hsv/texture branch images")
    p_infer.set_defaults(func=_cmd_infer)

    p_eval = sub.add_parser("eval", help="compare predictions with ground truth")
    p_eval.add_argument("--pred", required=True)
    p_eval.add_argument("--gt", required=True)
    p_eval.add_argument("--out", required=True)
    p_eval.add_argument("--overwrite", action="store_true")
    p_eval.set_defaults(func=_cmd_eval)

    p_synth = sub.add_parser("synth", help="generate a synthetic paired dataset")
    p_synth.add_argument("--n", type=int, required=True)
    p_synth.add_argument("--size", type=int, required=True)
    p_synth.add_argument("--seed", type=int, default=None)
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--overwrite", action="store_true")
    p_synth.set_defaults(func=_cmd_synth)
    return parser


def dispatch(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
