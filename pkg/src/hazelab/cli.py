# hazelab cli - Command line entry point: synthesize | train | dehaze | eval | wavelet | ablate

import argparse
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger

from . import __version__
from ._validation import CheckpointError, ConfigError, HazelabError
from .ablation import run_ablation
from .checkpoint import load_checkpoint
from .config import load_run_config, settings, write_run_config
from .datasets import ImageSet
from .display import (
    comparison_frame,
    per_image_frame,
    render_table,
    with_table1_reference,
    with_table2_reference,
    write_table,
)
from .file_ops import list_images, load_depth, load_image, save_image
from .haze import DEPTH_KINDS, HazeScene, dcp_dehaze, make_toy_scene, procedural_depth, synthesize_haze
from .manifest import load_manifest, write_manifest
from .metrics import evaluate_images
from .models import Manifest, ManifestEntry, RunConfig
from .network import GeneratorParams
from .tensor import Tensor4
from .trainer import dehaze_image, train
from .wavelet import dwt2, rescale_for_display

METHODS = ("identity", "dcp", "model")
MANIFEST_SUFFIXES = (".tsv", ".txt")

Dehazer = Callable[[np.ndarray], np.ndarray]


# ---------------------------------------------------------------------------
# Logging
# ---------------------------------------------------------------------------


def configure_logging(level: str, out_dir: Optional[Path] = None) -> None:
    """One stderr sink at ``level``, plus ``<out_dir>/hazelab.log`` when enabled."""
    logger.remove()
    logger.add(sys.stderr, level=level.upper(), format="<green>{time:HH:mm:ss}</green> | <level>{level: <8}</level> | {message}")
    if out_dir is not None and settings.log_to_file:
        out_dir.mkdir(parents=True, exist_ok=True)
        logger.add(out_dir / "hazelab.log", level="DEBUG", mode="w")


# ---------------------------------------------------------------------------
# Argument helpers
# ---------------------------------------------------------------------------


def _floats(text: str) -> Tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _range(text: str) -> Tuple[float, float]:
    values = _floats(text)
    if len(values) != 2 or values[0] > values[1]:
        raise argparse.ArgumentTypeError(f"expected LOW,HIGH with LOW <= HIGH, got {text!r}")
    return values[0], values[1]


def _named_manifest(text: str) -> Tuple[str, Path]:
    if "=" in text:
        name, path = text.split("=", 1)
        return name, Path(path)
    return Path(text).stem, Path(text)


def _load_generator(checkpoint: Optional[str]) -> GeneratorParams:
    if checkpoint is None:
        raise ConfigError("--method model needs --checkpoint", suggestion="Point --checkpoint at a generator.ckpt written by 'hazelab train'")
    params, _ = load_checkpoint(checkpoint)
    if not isinstance(params, GeneratorParams):
        raise CheckpointError(f"{checkpoint} holds a discriminator, not a generator")
    return params


def build_dehazer(method: str, checkpoint: Optional[str] = None, omega: float = 0.95, patch: int = 15, t_floor: float = 0.1) -> Dehazer:
    """Map a (3, h, w) [0, 1] hazy image to its restored version."""
    if method == "identity":
        return lambda image: image.copy()
    if method == "dcp":
        return lambda image: dcp_dehaze(Tensor4(image[None]), omega=omega, patch=patch, t_floor=t_floor).data[0]
    if method == "model":
        generator = _load_generator(checkpoint)
        return lambda image: dehaze_image(generator, image)
    raise ConfigError(f"unknown method {method!r}", suggestion=f"Use one of {', '.join(METHODS)}")


def _collect_inputs(source: Path) -> List[Tuple[str, Path]]:
    """(id, path) pairs from an image file, a directory, or a manifest."""
    if source.is_dir():
        return [(p.stem, p) for p in list_images(source)]
    if source.suffix.lower() in MANIFEST_SUFFIXES:
        return [(e.id, e.hazy) for e in load_manifest(source).entries]
    return [(source.stem, source)]


def _find_depth(directory: Path, image_id: str) -> Path:
    for candidate in list_images(directory):
        if candidate.stem == image_id:
            return candidate
    raise ConfigError(f"no depth map for {image_id!r} in {directory}")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_synthesize(args: argparse.Namespace) -> None:
    out = Path(args.out)
    rng = np.random.Generator(np.random.PCG64(args.seed))
    if args.toy:
        sources = [(f"toy{i:04d}", make_toy_scene(args.size, rng)) for i in range(args.toy)]
    else:
        sources = [(p.stem, load_image(p)) for p in list_images(args.clear)]
    if not sources:
        raise ConfigError("no clear images to synthesize from")

    depth_dir = None if args.depth in DEPTH_KINDS else Path(args.depth)
    entries, scenes = [], []
    for image_id, clear in sources:
        _, _, h, w = clear.shape
        if depth_dir is not None:
            depth_path: Optional[Path] = _find_depth(depth_dir, image_id)
            depth = load_depth(depth_path) * args.depth_scale  # type: ignore[arg-type]
        else:
            depth_path = None
            depth = procedural_depth(args.depth, h, w, args.depth_scale)
        beta = float(rng.uniform(*args.beta_range)) if args.beta_range else args.beta
        airlight = (float(rng.uniform(*args.airlight_range)),) if args.airlight_range else args.airlight

        scene = HazeScene(clear=clear, depth=depth[None, None], beta=beta, airlight=airlight)
        hazy = synthesize_haze(scene)
        clear_path = save_image(clear, out / "clear" / f"{image_id}.{args.format}")
        hazy_path = save_image(hazy, out / "hazy" / f"{image_id}.{args.format}")
        entries.append(ManifestEntry(id=image_id, hazy=hazy_path, clear=clear_path, depth=depth_path))
        scenes.append({"id": image_id, "beta": beta, "airlight": ",".join(f"{a:.4f}" for a in scene.airlight)})

    split = len(entries) - args.unlabeled
    if split < 1:
        raise ConfigError(f"--unlabeled {args.unlabeled} leaves no labeled images out of {len(entries)}")
    labeled_path = write_manifest(Manifest(kind="labeled", entries=entries[:split]), out / "labeled.tsv")
    if args.unlabeled:
        unlabeled = [e.model_copy(update={"clear": None}) for e in entries[split:]]
        write_manifest(Manifest(kind="unlabeled", entries=unlabeled), out / "unlabeled.tsv")
    pd.DataFrame(scenes).to_csv(out / "scenes.csv", index=False)
    logger.info(f"Synthesized {len(entries)} hazy images into {out} (manifest {labeled_path.name})")


def _run_config(args: argparse.Namespace) -> RunConfig:
    overrides = {
        "seed": args.seed,
        "out_dir": args.out,
        "labeled": getattr(args, "labeled", None),
        "unlabeled": getattr(args, "unlabeled", None),
        "validation": getattr(args, "validation", None),
        "epochs": getattr(args, "epochs", None),
        "max_steps": getattr(args, "max_steps", None),
    }
    run = load_run_config(args.config, overrides)
    if run.labeled is None or run.unlabeled is None:
        raise ConfigError("training needs a labeled and an unlabeled manifest", suggestion="Pass --labeled and --unlabeled or set them in the config file")
    return run


def _load_sets(run: RunConfig) -> Tuple[ImageSet, ImageSet]:
    labeled = ImageSet.from_manifest(load_manifest(run.labeled, kind="labeled"))  # type: ignore[arg-type]
    unlabeled = ImageSet.from_manifest(load_manifest(run.unlabeled))  # type: ignore[arg-type]
    return labeled, unlabeled


def cmd_train(args: argparse.Namespace) -> None:
    run = _run_config(args)
    configure_logging(args.log_level, run.out_dir)
    write_run_config(run, run.out_dir / "config.yaml")
    labeled, unlabeled = _load_sets(run)
    config = run.to_train_config()
    result = train(config, labeled, unlabeled, run.out_dir)
    logger.info(f"Checkpoint: {result.checkpoint}  log: {result.log_path}")

    if run.validation is not None:
        validation = ImageSet.from_manifest(load_manifest(run.validation, kind="labeled"))
        reports = [
            evaluate_images(lambda image: image.copy(), validation, "hazy input", "validation", crop=config.crop),
            evaluate_images(lambda image: dehaze_image(result.generator, image), validation, run.label, "validation", crop=config.crop),
        ]
        table = comparison_frame(reports)
        write_table(table, run.out_dir, "validation")
        print(render_table(table))


def cmd_dehaze(args: argparse.Namespace) -> None:
    dehaze = build_dehazer(args.method, args.checkpoint, args.omega, args.patch, args.t_floor)
    out = Path(args.out)
    inputs = _collect_inputs(Path(args.input))
    for image_id, path in inputs:
        restored = dehaze(load_image(path).data[0])
        save_image(restored[None], out / f"{image_id}.{args.format}")
    logger.info(f"Dehazed {len(inputs)} images with {args.method} into {out}")


def cmd_eval(args: argparse.Namespace) -> None:
    methods = args.method or ["identity", "dcp"]
    dehazers: Dict[str, Dehazer] = {m: build_dehazer(m, args.checkpoint, args.omega, args.patch, args.t_floor) for m in methods}
    reports = []
    for name, path in args.manifest:
        images = ImageSet.from_manifest(load_manifest(path, kind="labeled"))
        for method in methods:
            reports.append(evaluate_images(dehazers[method], images, method, name, crop=args.crop))

    table = comparison_frame(reports)
    if args.reference:
        table = with_table1_reference(table)
    if args.out:
        out = Path(args.out)
        write_table(table, out, "metrics")
        for report in reports:
            per_image_frame(report).to_csv(out / f"{report.dataset}_{report.method}.csv", index=False)
    print(render_table(table))


def cmd_wavelet(args: argparse.Namespace) -> None:
    source = Path(args.image)
    out = Path(args.out)
    bands = dwt2(load_image(source), orthonormal=args.orthonormal)
    for name, band in bands.items():
        save_image(rescale_for_display(band.data), out / f"{source.stem}_{name}.{args.format}")
    logger.info(f"Wrote 4 sub-band images for {source.name} into {out}")


def cmd_ablate(args: argparse.Namespace) -> None:
    run = _run_config(args)
    if run.validation is None:
        raise ConfigError("ablation needs a validation manifest", suggestion="Pass --validation")
    configure_logging(args.log_level, run.out_dir)
    write_run_config(run, run.out_dir / "config.yaml")
    labeled, unlabeled = _load_sets(run)
    validation = ImageSet.from_manifest(load_manifest(run.validation, kind="labeled"))
    report = run_ablation(run, labeled, unlabeled, validation, run.out_dir)
    table = report.frame()
    if args.reference:
        table = with_table2_reference(table)
    write_table(table, run.out_dir, "ablation")
    print(render_table(table))


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_format(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--format", choices=["png", "ppm"], default="png", help="Output image format")


def _add_dcp_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--omega", type=float, default=0.95, help="Haze kept by DCP (default: 0.95)")
    parser.add_argument("--patch", type=int, default=15, help="DCP dark channel patch size (default: 15)")
    parser.add_argument("--t-floor", type=float, default=0.1, help="Lower bound on transmission (default: 0.1)")


def _add_run_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="Flat YAML or key=value file of run settings")
    parser.add_argument("--labeled", help="Labeled manifest (hazy + clear)")
    parser.add_argument("--unlabeled", help="Unlabeled manifest (hazy only)")
    parser.add_argument("--validation", help="Labeled manifest for evaluation")
    parser.add_argument("--epochs", type=int, help="Override the number of epochs")
    parser.add_argument("--max-steps", type=int, help="Stop after this many steps")
    parser.add_argument("--seed", type=int, help="Random seed")
    parser.add_argument("--out", help="Output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hazelab", description="Desk-scale single image dehazing toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=settings.log_level, help="Log level for stderr (default: %(default)s)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="Make hazy images from clear images and depth")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--clear", help="Directory of clear images")
    source.add_argument("--toy", type=int, help="Generate this many procedural clear scenes")
    p.add_argument("--size", type=int, default=64, help="Toy scene size in pixels (default: 64)")
    p.add_argument("--depth", default="ramp", help=f"{' | '.join(DEPTH_KINDS)} or a directory of depth images")
    p.add_argument("--depth-scale", type=float, default=1.0, help="Multiplier applied to depth (default: 1.0)")
    p.add_argument("--beta", type=float, default=1.0, help="Scattering coefficient (default: 1.0)")
    p.add_argument("--airlight", type=_floats, default=(0.9,), help="Airlight A, one value or R,G,B (default: 0.9)")
    p.add_argument("--beta-range", type=_range, help="Draw beta per image from LOW,HIGH")
    p.add_argument("--airlight-range", type=_range, help="Draw a gray airlight per image from LOW,HIGH")
    p.add_argument("--unlabeled", type=int, default=0, help="Put the last N images in unlabeled.tsv")
    p.add_argument("--seed", type=int, default=0, help="Random seed (default: 0)")
    p.add_argument("--out", required=True, help="Output directory")
    _add_format(p)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("train", help="Train the generator")
    _add_run_options(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("dehaze", help="Dehaze an image, a directory or a manifest")
    p.add_argument("input", help="Image file, directory, or manifest")
    p.add_argument("--method", choices=METHODS, default="dcp", help="Dehazing method (default: dcp)")
    p.add_argument("--checkpoint", help="Generator checkpoint for --method model")
    p.add_argument("--out", required=True, help="Output directory")
    _add_dcp_options(p)
    _add_format(p)
    p.set_defaults(func=cmd_dehaze)

    p = sub.add_parser("eval", help="PSNR/SSIM of methods on labeled manifests")
    p.add_argument("--manifest", type=_named_manifest, action="append", required=True, help="NAME=PATH of a labeled manifest; repeatable")
    p.add_argument("--method", choices=METHODS, action="append", help="Method to score; repeatable (default: identity and dcp)")
    p.add_argument("--checkpoint", help="Generator checkpoint for --method model")
    p.add_argument("--crop", type=int, help="Center crop size before scoring")
    p.add_argument("--reference", action="store_true", help="Append published full-scale numbers to the table")
    p.add_argument("--out", help="Directory for CSV and text tables")
    _add_dcp_options(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("wavelet", help="Write the four Haar sub-bands of an image")
    p.add_argument("image", help="Input image")
    p.add_argument("--out-dir", "--out", dest="out", required=True, help="Output directory")
    p.add_argument("--orthonormal", action="store_true", help="Use 1/2-scaled filters")
    _add_format(p)
    p.set_defaults(func=cmd_wavelet)

    p = sub.add_parser("ablate", help="Train and score the four component variants")
    _add_run_options(p)
    p.add_argument("--reference", action="store_true", help="Append published full-scale numbers to the table")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)
    try:
        args.func(args)
    except (HazelabError, OSError, ValueError) as e:
        first_line = str(e).strip().splitlines()[0] if str(e).strip() else e.__class__.__name__
        print(f"hazelab: error: {first_line}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
