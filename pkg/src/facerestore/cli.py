"""Command-line interface.

Subcommands: degrade, train-fpn, train-gan, parse, restore, evaluate.
Every command exits 0 on success; failures print a one-line JSON object
to stderr and exit 1.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .config import RunConfig, load_config
from .data import PairedImageFolder, fixed_eval_degradation
from .degrade import degrade_folder
from .imgproc import from_tensor, load_image, resize_image, save_image, save_label_map, to_tensor
from .metrics import FeatureStats, frechet_distance, load_features, ms_ssim, psnr, ssim
from .parsing import argmax_labels
from .training import FpnTrainer, RestorationTrainer, load_generator, load_parser, restore_image


def _global_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="run configuration file (key = value sections)")
    parser.add_argument("--seed", type=int, help="override the configured seed")
    parser.add_argument("--device", default="cpu", help="torch device (default: cpu)")
    parser.add_argument("--deterministic", action="store_true", help="force deterministic torch kernels")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="facerestore", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("degrade", help="synthesize degraded copies of clean images")
    _global_flags(p)
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", dest="out_dir", required=True)
    p.add_argument("--size", type=int, default=512)
    p.add_argument("--params-json", help="manifest path (default: OUT/params.jsonl)")
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("train-fpn", help="train the face parser")
    _global_flags(p)
    p.add_argument("--resume", help="resume from this checkpoint")
    p.set_defaults(func=cmd_train_fpn)

    p = sub.add_parser("train-gan", help="train the restoration GAN")
    _global_flags(p)
    p.add_argument("--fpn", help="parser checkpoint (needed when label_source = parser)")
    p.add_argument("--resume", help="resume from this checkpoint")
    p.set_defaults(func=cmd_train_gan)

    p = sub.add_parser("parse", help="predict label maps for a directory of images")
    _global_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", dest="out_dir", required=True)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("restore", help="restore a directory of degraded images")
    _global_flags(p)
    p.add_argument("--fpn", required=True, help="parser checkpoint")
    p.add_argument("--gen", required=True, help="generator checkpoint")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", dest="out_dir", required=True)
    p.add_argument("--dump-pyramid", action="store_true", help="also write per-level inputs")
    p.add_argument("--zero-levels", help="comma-separated 1-based levels to blank, or 'all'")
    p.set_defaults(func=cmd_restore)

    p = sub.add_parser("evaluate", help="image metrics or feature-distribution distance")
    _global_flags(p)
    p.add_argument("--pred", help="directory of predictions")
    p.add_argument("--gt", help="directory of references")
    p.add_argument("--pred-features", help="feature file for predictions")
    p.add_argument("--gt-features", help="feature file for references")
    p.add_argument("--report", required=True, help="output CSV path")
    p.set_defaults(func=cmd_evaluate)
    return parser


def _apply_runtime_flags(args) -> None:
    if args.deterministic:
        torch.use_deterministic_algorithms(True)


def _load_run_config(args, require: bool = True) -> RunConfig:
    if not args.config:
        if require:
            raise ValueError("--config is required for this command")
        config = RunConfig()
    else:
        config = load_config(args.config)
    if args.seed is not None:
        import dataclasses

        config = dataclasses.replace(config, train=dataclasses.replace(config.train, seed=args.seed))
    return config


def cmd_degrade(args) -> int:
    seed = args.seed if args.seed is not None else 0
    count = degrade_folder(args.in_dir, args.out_dir, seed, size=args.size, manifest_path=args.params_json)
    print(f"degraded {count} images -> {args.out_dir}")
    return 0


def cmd_train_fpn(args) -> int:
    config = _load_run_config(args)
    dataset = PairedImageFolder(config.data.hq_dir, config.data.label_dir, resolution=config.train.resolution)
    out_dir = Path(config.train.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = out_dir / "fpn.ckpt"
    if args.resume:
        trainer = FpnTrainer.resume(args.resume, dataset, device=args.device)
    else:
        trainer = FpnTrainer(config, dataset, device=args.device)
    steps = config.train.max_steps - trainer.step_count
    history = trainer.train(max(steps, 0), log_path=out_dir / "fpn_loss.csv", ckpt_path=ckpt_path)
    final = history[-1]["total"] if history else float("nan")
    print(f"trained parser for {len(history)} steps (final loss {final:.4f}) -> {ckpt_path}")
    return 0


def cmd_train_gan(args) -> int:
    config = _load_run_config(args)
    dataset = PairedImageFolder(
        config.data.hq_dir, config.data.label_dir or None, resolution=config.train.resolution
    )
    parser = None
    if config.train.label_source == "parser":
        if not args.fpn:
            raise ValueError("label_source 'parser' requires --fpn CHECKPOINT")
        parser, _ = load_parser(args.fpn, device=args.device)
    out_dir = Path(config.train.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = out_dir / "restorer.ckpt"
    if args.resume:
        trainer = RestorationTrainer.resume(args.resume, dataset, parser=parser, device=args.device)
    else:
        trainer = RestorationTrainer(config, dataset, parser=parser, device=args.device)
    steps = config.train.max_steps - trainer.step_count
    history = trainer.train(max(steps, 0), log_path=out_dir / "restorer_loss.csv", ckpt_path=ckpt_path)
    final = history[-1]["total"] if history else float("nan")
    print(f"trained restorer for {len(history)} steps (final loss {final:.4f}) -> {ckpt_path}")
    return 0


def _iter_images(in_dir: str) -> list[Path]:
    files = sorted(p for p in Path(in_dir).iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg"))
    if not files:
        raise ValueError(f"no images found in {in_dir}")
    return files


def cmd_parse(args) -> int:
    model, config = load_parser(args.model, device=args.device)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    res = config.fpn.in_resolution
    for path in _iter_images(args.in_dir):
        img = resize_image(load_image(path), res, "bicubic")
        with torch.no_grad():
            logits, _ = model(to_tensor(img).unsqueeze(0))
        labels = argmax_labels(logits)[0].cpu().numpy().astype(np.uint8)
        save_label_map(out_dir / (path.stem + ".png"), labels)
    print(f"parsed {len(_iter_images(args.in_dir))} images -> {out_dir}")
    return 0


def _parse_zero_levels(text: str | None):
    if not text:
        return ()
    if text.strip().lower() == "all":
        return "all"
    return tuple(int(part) for part in text.split(",") if part.strip())


def cmd_restore(args) -> int:
    parser, _ = load_parser(args.fpn, device=args.device)
    gen, _ = load_generator(args.gen, device=args.device)
    zero_levels = _parse_zero_levels(args.zero_levels)
    out_dir = Path(args.out_dir)
    parse_dir = out_dir / "parse"
    parse_dir.mkdir(parents=True, exist_ok=True)
    files = _iter_images(args.in_dir)
    for path in files:
        lq = load_image(path)
        restored, labels = restore_image(parser, gen, lq, zero_levels=zero_levels)
        # keep out_dir itself evaluate-friendly: only restored images at the top level
        save_image(out_dir / (path.stem + ".png"), restored)
        save_label_map(parse_dir / (path.stem + ".png"), labels)
        if args.dump_pyramid:
            pyramid_dir = out_dir / "pyramid"
            pyramid_dir.mkdir(exist_ok=True)
            _dump_pyramid(gen, lq, labels, pyramid_dir, path.stem)
    print(f"restored {len(files)} images -> {out_dir}")
    return 0


def _dump_pyramid(gen, lq: np.ndarray, labels: np.ndarray, out_dir: Path, stem: str) -> None:
    from .generator import build_input_pyramid

    res = gen.config.in_resolution
    lq_t = to_tensor(resize_image(lq, res, "bicubic")).unsqueeze(0)
    labels_t = torch.from_numpy(labels.astype(np.int64)).unsqueeze(0)
    with torch.no_grad():
        pyramid = build_input_pyramid(lq_t, labels_t, gen.config)
    for level, (lq_i, parse_i) in enumerate(pyramid, start=1):
        save_image(out_dir / f"{stem}_L{level}_lq.png", from_tensor(lq_i[0]))
        soft_labels = parse_i[0].argmax(dim=0).to(torch.uint8).cpu().numpy()
        save_label_map(out_dir / f"{stem}_L{level}_parse.png", soft_labels)


def cmd_evaluate(args) -> int:
    feature_mode = bool(args.pred_features or args.gt_features)
    if feature_mode:
        if not (args.pred_features and args.gt_features):
            raise ValueError("feature mode needs both --pred-features and --gt-features")
        stats_pred = FeatureStats.from_features(load_features(args.pred_features))
        stats_gt = FeatureStats.from_features(load_features(args.gt_features))
        value = frechet_distance(stats_pred, stats_gt)
        with open(args.report, "w", newline="") as fh:
            fh.write("metric,value\nfrechet_distance,{:.8f}\n".format(value))
        print(f"frechet_distance {value:.6f} -> {args.report}")
        return 0
    if not (args.pred and args.gt):
        raise ValueError("image mode needs both --pred and --gt")
    pred_files = _iter_images(args.pred)
    rows = []
    for path in pred_files:
        gt_path = Path(args.gt) / path.name
        if not gt_path.exists():
            raise FileNotFoundError(f"no reference image for {path.name} in {args.gt}")
        a, b = load_image(path), load_image(gt_path)
        try:
            ms = ms_ssim(a, b)
        except ValueError:
            ms = float("nan")  # image too small for the 5-level pyramid
        rows.append((path.name, psnr(a, b), ssim(a, b), ms))
    with open(args.report, "w", newline="") as fh:
        fh.write("file,psnr,ssim,ms_ssim\n")
        for name, p, s, m in rows:
            fh.write(f"{name},{p:.6f},{s:.6f},{m:.6f}\n")
        mean = lambda vals: float(np.mean([v for v in vals if np.isfinite(v)] or [float("nan")]))
        fh.write(
            "mean,{:.6f},{:.6f},{:.6f}\n".format(
                mean([r[1] for r in rows]), mean([r[2] for r in rows]), mean([r[3] for r in rows])
            )
        )
    print(f"evaluated {len(rows)} pairs -> {args.report}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_runtime_flags(args)
        return args.func(args)
    except Exception as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
