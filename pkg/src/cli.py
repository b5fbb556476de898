"""
Command-line surface: synthetic data, training, gradient checks, shape
dumps, heatmaps and evaluation.

Exit status: 0 on success, 1 when a gradient check fails, 2 on argument,
config, format or I/O errors.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from . import tensor
from .config import TrainConfig, load_config, save_config
from .errors import ArgumentError, ICNNError
from .gradcheck import print_gradcheck_report
from .heatmap import save_heatmap, single_pixel_heatmap
from .model_io import read_shapes, load_model, save_model, save_snapshots
from .shapes import shape_summary, trajectories
from .synth import IMAGES_FILE, LABELS_FILE, SynthParams, generate, load_dataset, save_dataset
from .tensor import Tensor
from .training import ARCHITECTURES, TrainingSession, evaluate, toy_architecture
from .utils import logger

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_ERROR = 2


class PreflightChecker:
    """Checks run before training; each returns (ok, message)."""

    @classmethod
    def check_dataset(cls, data_dir: Path) -> Tuple[bool, str]:
        missing = [name for name in (IMAGES_FILE, LABELS_FILE) if not (data_dir / name).is_file()]
        if missing:
            return False, f"✗ Dataset {data_dir}: missing {', '.join(missing)}"
        return True, f"✓ Dataset found: {data_dir}"

    @classmethod
    def check_config(cls, config: TrainConfig) -> Tuple[bool, str]:
        issues = config.problems()
        if issues:
            return False, "✗ Config: " + "; ".join(issues)
        return True, f"✓ Config valid (max_iter={config.max_iter}, seed={config.seed})"

    @classmethod
    def check_output(cls, out_path: Path) -> Tuple[bool, str]:
        parent = out_path.parent if str(out_path.parent) else Path(".")
        if not parent.is_dir():
            return False, f"✗ Output directory does not exist: {parent}"
        return True, f"✓ Output: {out_path}"

    @classmethod
    def run_full_check(cls, data_dir: Path, config: TrainConfig, out_path: Path) -> Tuple[bool, List[str]]:
        """
        Run all pre-flight checks.
        Returns: (all_ok, list_of_messages)
        """
        results = [cls.check_dataset(data_dir), cls.check_config(config), cls.check_output(out_path)]
        return all(ok for ok, _ in results), [msg for _, msg in results]


def parse_pixel(text: str) -> Tuple[int, int]:
    try:
        row, col = (int(part) for part in text.split(","))
    except ValueError as e:
        raise ArgumentError(f"pixel must be ROW,COL, got '{text}'") from e
    return row, col


# --- Commands ---

def cmd_gradcheck(seed: int, trials: int) -> int:
    return EXIT_OK if print_gradcheck_report(seed, trials) else EXIT_FAILED


def cmd_synth(params: SynthParams, out_dir: Path) -> int:
    dataset = generate(params)
    out = save_dataset(dataset, out_dir)
    foreground = int(dataset.labels.sum())
    logger.info(f"Wrote {len(dataset)} images of {params.size}x{params.size} to {out} "
                f"({foreground} stroke pixels)")
    return EXIT_OK


def cmd_train(config: TrainConfig, data_dir: Path, arch: str, out_model: Path,
              snapshot_every: int = 0, irregular_from: int = 0) -> int:
    all_ok, messages = PreflightChecker.run_full_check(data_dir, config, out_model)
    for msg in messages:
        logger.info(msg)
    if not all_ok:
        config.validate()
        raise ArgumentError("pre-flight checks failed")

    dataset = load_dataset(data_dir)
    specs = toy_architecture(arch, dataset.images.shape[1], dataset.num_classes,
                             config.hidden_channels, irregular_from)
    session = TrainingSession(config, dataset, specs, snapshot_every)
    result = session.run()

    metadata = {"arch": arch, "irregular_from": irregular_from, "seed": config.seed,
                "pixel_accuracy": result.pixel_accuracy, "mean_iou": result.mean_iou}
    save_model(session.net, out_model, result.iterations, metadata)
    shapes_path = save_snapshots(result.snapshots, out_model.with_name(out_model.name + ".shapes.json"))
    config_path = save_config(config, out_model.with_name(out_model.name + ".config.toml"))
    logger.info(f"Saved model {out_model}, snapshots {shapes_path}, config {config_path}")
    return EXIT_OK


def cmd_dump_shapes(in_path: Path, out_path: Path) -> int:
    document = trajectories(read_shapes(in_path))
    out_path.write_text(json.dumps(document, indent=1), encoding="utf-8")
    logger.info(f"Wrote trajectories of {len(document['layers'])} layers to {out_path}")
    return EXIT_OK


def cmd_shape_stats(in_path: Path) -> int:
    print(json.dumps(shape_summary(read_shapes(in_path)), indent=1))
    return EXIT_OK


def cmd_heatmap(model_path: Path, image_path: Path, pixel: Tuple[int, int], class_index: int,
                out_prefix: Path, index: int = 0) -> int:
    net, _ = load_model(model_path)
    images = tensor.load(image_path)
    if not 0 <= index < images.shape[0]:
        raise ArgumentError(f"image index {index} outside [0, {images.shape[0]})")
    heatmap = single_pixel_heatmap(net, Tensor(images.data[index:index + 1]), pixel, class_index)
    csv_path, pgm_path = save_heatmap(heatmap, out_prefix)
    logger.info(f"Wrote {csv_path} and {pgm_path} ({int((heatmap > 0).sum())} nonzero pixels)")
    return EXIT_OK


def cmd_evaluate(model_path: Path, data_dir: Path) -> int:
    net, _ = load_model(model_path)
    print(json.dumps(evaluate(net, load_dataset(data_dir)), indent=1))
    return EXIT_OK


# --- Argument parsing ---

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="icnn", description="Irregular convolution toolkit")
    parser.add_argument("--verbose", action="store_true", help="Debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gradcheck", help="Compare analytic gradients with finite differences")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=50)

    p = sub.add_parser("synth", help="Generate a stroke dataset")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--images", type=int, default=16)
    p.add_argument("--strokes", type=int, default=4)
    p.add_argument("--len", dest="length", type=int, default=7)
    p.add_argument("--angle", type=float, default=0.0)
    p.add_argument("--thickness", type=int, default=1)
    p.add_argument("--distractors", type=int, default=0)
    p.add_argument("--distractor-len", dest="distractor_length", type=int, default=3)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="Train the toy network")
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--arch", choices=ARCHITECTURES, default="irregular")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--snapshot-every", type=int, default=0)
    p.add_argument("--irregular-from", type=int, default=0)
    p.add_argument("--max-iter", type=int, default=None)
    p.add_argument("--lr-weights", type=float, default=None)
    p.add_argument("--lr-positions", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)

    p = sub.add_parser("dump-shapes", help="Per-tap position trajectories as JSON")
    p.add_argument("--in", dest="in_path", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("shape-stats", help="Spread and per-tap statistics of the latest shapes")
    p.add_argument("--in", dest="in_path", type=Path, required=True)

    p = sub.add_parser("heatmap", help="Single-pixel input-gradient map")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--image", type=Path, required=True)
    p.add_argument("--pixel", type=str, required=True, help="ROW,COL in output coordinates")
    p.add_argument("--class", dest="class_index", type=int, required=True)
    p.add_argument("--index", type=int, default=0, help="Batch item of the image tensor")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("evaluate", help="Pixel accuracy and mIoU of a model on a dataset")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    return parser


def dispatch(args: argparse.Namespace) -> int:
    if args.command == "gradcheck":
        return cmd_gradcheck(args.seed, args.trials)
    if args.command == "synth":
        params = SynthParams(
            size=args.size, images=args.images, strokes=args.strokes, length=args.length,
            angle=args.angle, thickness=args.thickness, distractors=args.distractors,
            distractor_length=args.distractor_length, noise=args.noise, seed=args.seed,
        )
        return cmd_synth(params, args.out)
    if args.command == "train":
        config = load_config(args.config) if args.config else TrainConfig()
        config = config.with_overrides(
            max_iter=args.max_iter, lr_weights=args.lr_weights, lr_positions=args.lr_positions,
            seed=args.seed, batch_size=args.batch_size,
        )
        return cmd_train(config, args.data, args.arch, args.out, args.snapshot_every, args.irregular_from)
    if args.command == "dump-shapes":
        return cmd_dump_shapes(args.in_path, args.out)
    if args.command == "shape-stats":
        return cmd_shape_stats(args.in_path)
    if args.command == "heatmap":
        return cmd_heatmap(args.model, args.image, parse_pixel(args.pixel), args.class_index, args.out, args.index)
    if args.command == "evaluate":
        return cmd_evaluate(args.model, args.data)
    raise ArgumentError(f"unknown command '{args.command}'")


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logger.setLevel(logging.DEBUG if args.verbose else logging.INFO)
    try:
        return dispatch(args)
    except (ICNNError, OSError) as e:
        logger.error(str(e))
        return EXIT_ERROR
