#!/usr/bin/env python3
"""
Batch command line: inpaint, denoise, metrics, bench, synth.

Exit codes: 0 success, 1 usage or parameter error, 2 I/O or dimension
mismatch, 3 numerical divergence.
"""

import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import cv2

from config import Config, ConfigError
from imagecore import (
    DimensionMismatchError,
    ImageBuffer,
    ImageIOError,
    Mask,
    check_pair,
    damage,
    load_image,
    mask_from_color,
    mask_from_file,
    save_image,
    save_mask,
)
from inpainter import (
    INIT_MODES,
    INPAINT_METHODS,
    K_DEFAULT,
    K_UNIT_RANGE,
    DiffusionParams,
    DivergenceError,
    EmptyBoundaryError,
    RunStats,
    run_method,
)
from quality import report, rows_to_csv, save_rows
from synthetic import KINDS, KEY_COLOR, MASK_SHAPES, make
from tensorfield import CedParams, dump_fields, eigen_decompose, structure_tensor

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_DIVERGENCE = 3

PROGRESS_EVERY = 100


class UsageError(ValueError):
    """Inconsistent or missing command-line inputs"""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"error: usage: {message}\n")


@dataclass
class RunConfig:
    subcommand: str
    input: Optional[Path] = None
    mask: Optional[Path] = None
    mask_color: Optional[Tuple[float, float, float]] = None
    mask_tol: float = 0.0
    reference: Optional[Path] = None
    output: Optional[Path] = None
    method: str = "tensor"
    params: DiffusionParams = field(default_factory=DiffusionParams)
    ced: CedParams = field(default_factory=CedParams)
    csv_path: Optional[Path] = None
    json_path: Optional[Path] = None
    pdf_path: Optional[Path] = None
    snapshot_every: int = 0
    snapshot_dir: Optional[Path] = None
    dump_fields: Optional[Path] = None
    threads: Optional[int] = None
    no_timing: bool = False
    synthetic: Optional[str] = None
    size: int = 64
    hole: int = 16
    mask_shape: str = "square"
    scratch_width: int = 3
    out_dir: Optional[Path] = None


def _color(text: str) -> Tuple[float, float, float]:
    try:
        parts = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected R,G,B, got {text!r}")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected R,G,B, got {text!r}")
    return parts


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="key=value settings file (flags override it)")
    p.add_argument("--threads", type=int, help="OpenCV worker threads; results do not depend on it")
    verbosity = p.add_mutually_exclusive_group()
    verbosity.add_argument("--quiet", action="store_true", help="warnings and errors only")
    verbosity.add_argument("--verbose", action="store_true", help="debug logging")


def _add_solver(p: argparse.ArgumentParser):
    g = p.add_argument_group("solver parameters")
    g.add_argument("--dt", type=float, help="time step (default 0.24)")
    g.add_argument("--c", type=float, help="diffusion weight scale (default 0.75)")
    g.add_argument("--k", type=float, help=f"contrast threshold in intensity units (default {K_DEFAULT})")
    g.add_argument("--k-paper-scale", action="store_true", default=None,
                   help=f"default k to the literal {K_UNIT_RANGE} instead of {K_UNIT_RANGE} x 255")
    g.add_argument("--sigma", type=float, help="pre-smoothing scale (default 1.2)")
    g.add_argument("--rho", type=float, help="tensor integration scale (default 4.5)")
    g.add_argument("--iters", type=int, help="iterations (default 2500)")
    g.add_argument("--eps", type=float, help="eigenvector degeneracy threshold")
    g.add_argument("--init", choices=INIT_MODES, help="hole initialization (default onion-peel)")
    g.add_argument("--clamp", action=argparse.BooleanOptionalAction, default=None,
                   help="clamp tensor/CED updates to [0, 255] (default on)")
    g.add_argument("--tv-eps", type=float, help="TV diffusivity regularization (default 1.0)")
    g.add_argument("--stop-tol", type=float, help="stop once the max update falls below this")
    g.add_argument("--snapshot-every", type=int, help="write a PNG snapshot every S iterations")
    g.add_argument("--snapshot-dir", type=Path, help="snapshot directory (default: next to the output)")


def _add_scene(p: argparse.ArgumentParser):
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--hole", type=int, default=16, help="side of the centred square hole")
    p.add_argument("--mask-shape", choices=MASK_SHAPES, default="square",
                   help="centred square hole or thin scratches")
    p.add_argument("--scratch-width", type=int, default=3)


def _add_mask(p: argparse.ArgumentParser):
    group = p.add_mutually_exclusive_group()
    group.add_argument("--mask", type=Path, help="grayscale mask image, nonzero = hole")
    group.add_argument("--mask-color", type=_color, metavar="R,G,B", help="mark pixels of this colour as the hole")
    p.add_argument("--mask-tol", type=float, default=0.0, help="colour-key tolerance per channel")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="inpaint", description="Structure-tensor diffusion inpainting and baselines.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("inpaint", help="fill the masked region of an image")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--out", dest="output", type=Path, required=True)
    p.add_argument("--method", choices=INPAINT_METHODS, help="solver (default tensor)")
    p.add_argument("--reference", type=Path, help="ground truth; prints quality metrics of the result")
    p.add_argument("--dump-fields", type=Path, metavar="DIR",
                   help="write the final eigen fields as float TIFFs")
    _add_mask(p)
    _add_solver(p)
    _add_common(p)

    p = sub.add_parser("denoise", help="coherence-enhancing diffusion of a whole image")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--out", dest="output", type=Path, required=True)
    p.add_argument("--c1", type=float, help="across-structure speed (default 0.001)")
    p.add_argument("--c2", type=float, help="coherence sensitivity (default 1.0)")
    p.add_argument("--reference", type=Path, help="ground truth; prints quality metrics of the result")
    _add_solver(p)
    _add_common(p)

    p = sub.add_parser("metrics", help="MSE, PSNR and MSSIM of two images")
    p.add_argument("a", type=Path)
    p.add_argument("b", type=Path)
    p.add_argument("--json", dest="json_path", type=Path)
    _add_common(p)

    p = sub.add_parser("bench", help="damage a ground truth and compare all inpainting methods")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--in", dest="input", type=Path, help="ground-truth image (needs --mask)")
    source.add_argument("--synthetic", choices=KINDS, help="generate the ground truth and hole")
    p.add_argument("--mask", type=Path)
    _add_scene(p)
    p.add_argument("--csv", dest="csv_path", type=Path, help="CSV table (default: standard output)")
    p.add_argument("--json", dest="json_path", type=Path)
    p.add_argument("--pdf", dest="pdf_path", type=Path)
    p.add_argument("--no-timing", action="store_true", help="leave the seconds column empty")
    _add_solver(p)
    _add_common(p)

    p = sub.add_parser("synth", help="write a synthetic ground truth, damaged copy and mask")
    p.add_argument("kind", choices=KINDS)
    _add_scene(p)
    p.add_argument("--out-dir", type=Path, default=Path("."))
    _add_common(p)
    return parser


def _solver_params(args: argparse.Namespace, cfg_file: Config) -> DiffusionParams:
    unit_range = cfg_file.resolve("k-paper-scale", args.k_paper_scale, False)
    base = DiffusionParams()
    return DiffusionParams(
        dt=cfg_file.resolve("dt", args.dt, base.dt),
        c=cfg_file.resolve("c", args.c, base.c),
        k=cfg_file.resolve("k", args.k, K_UNIT_RANGE if unit_range else K_DEFAULT),
        sigma=cfg_file.resolve("sigma", args.sigma, base.sigma),
        rho=cfg_file.resolve("rho", args.rho, base.rho),
        iterations=cfg_file.resolve("iters", args.iters, base.iterations),
        eps=cfg_file.resolve("eps", args.eps, base.eps),
        init=cfg_file.resolve("init", args.init, base.init),
        clamp=cfg_file.resolve("clamp", args.clamp, base.clamp),
        stop_tol=cfg_file.resolve("stop-tol", args.stop_tol, None),
        tv_eps=cfg_file.resolve("tv-eps", args.tv_eps, base.tv_eps),
    )


def build_config(args: argparse.Namespace) -> RunConfig:
    """Merge flags, config file and defaults; validates every parameter"""
    cfg_file = Config(args.config)
    cfg = RunConfig(subcommand=args.subcommand, threads=cfg_file.resolve("threads", args.threads))
    if cfg.threads is not None and cfg.threads < 0:
        raise UsageError(f"threads must be >= 0, got {cfg.threads}")

    if args.subcommand == "metrics":
        cfg.input, cfg.reference, cfg.json_path = args.a, args.b, args.json_path
        return cfg
    if args.subcommand == "synth":
        cfg.synthetic, cfg.size, cfg.hole, cfg.out_dir = args.kind, args.size, args.hole, args.out_dir
        cfg.mask_shape, cfg.scratch_width = args.mask_shape, args.scratch_width
        return cfg

    cfg.params = _solver_params(args, cfg_file)
    cfg.input = args.input
    cfg.snapshot_every = cfg_file.resolve("snapshot-every", args.snapshot_every, 0)
    if cfg.snapshot_every < 0:
        raise UsageError(f"snapshot-every must be >= 0, got {cfg.snapshot_every}")
    cfg.snapshot_dir = args.snapshot_dir

    if args.subcommand == "inpaint":
        cfg.method = cfg_file.resolve("method", args.method, "tensor")
        if cfg.method not in INPAINT_METHODS:
            raise UsageError(f"method must be one of {', '.join(INPAINT_METHODS)}, got {cfg.method!r}")
        cfg.output, cfg.reference, cfg.dump_fields = args.output, args.reference, args.dump_fields
        cfg.mask, cfg.mask_color, cfg.mask_tol = args.mask, args.mask_color, args.mask_tol
        if cfg.mask is None and cfg.mask_color is None:
            raise UsageError("inpaint needs --mask or --mask-color")
    elif args.subcommand == "denoise":
        cfg.method = "ced"
        cfg.output, cfg.reference = args.output, args.reference
        cfg.ced = CedParams(
            c1=cfg_file.resolve("c1", args.c1, CedParams.c1),
            c2=cfg_file.resolve("c2", args.c2, CedParams.c2),
        )
    elif args.subcommand == "bench":
        cfg.mask, cfg.synthetic = args.mask, args.synthetic
        cfg.size, cfg.hole = args.size, args.hole
        cfg.mask_shape, cfg.scratch_width = args.mask_shape, args.scratch_width
        cfg.csv_path, cfg.json_path, cfg.pdf_path = args.csv_path, args.json_path, args.pdf_path
        cfg.no_timing = args.no_timing
        if cfg.input is not None and cfg.mask is None:
            raise UsageError("bench --in needs --mask")
        if cfg.input is not None and cfg.mask_shape != "square":
            raise UsageError("--mask-shape applies to --synthetic scenes only")
    return cfg


class Progress:
    """Iteration observer: a status line every PROGRESS_EVERY steps plus optional snapshots"""

    def __init__(self, method: str, total: int, snapshot_every: int = 0, snapshot_dir: Optional[Path] = None):
        self.method = method
        self.total = total
        self.snapshot_every = snapshot_every
        self.snapshot_dir = snapshot_dir
        if snapshot_every and snapshot_dir is not None:
            snapshot_dir.mkdir(parents=True, exist_ok=True)

    def __call__(self, step: int, image: ImageBuffer, max_update: float):
        if step % PROGRESS_EVERY == 0:
            logger.info("%s: iteration %d/%d max update %.6g", self.method, step, self.total, max_update)
        if self.snapshot_every and step % self.snapshot_every == 0:
            save_image(image, self.snapshot_dir / f"snapshot_{step:05d}.png")


def _progress(cfg: RunConfig, method: str) -> Progress:
    snapshot_dir = cfg.snapshot_dir
    if cfg.snapshot_every and snapshot_dir is None:
        snapshot_dir = cfg.output.parent if cfg.output is not None else Path(".")
    return Progress(method, cfg.params.iterations, cfg.snapshot_every, snapshot_dir)


def _resolve_mask(cfg: RunConfig, img: ImageBuffer) -> Mask:
    if cfg.mask is not None:
        mask = mask_from_file(cfg.mask)
    else:
        mask = mask_from_color(img, cfg.mask_color, cfg.mask_tol)
    check_pair(img, mask)
    logger.info("mask: %d of %d pixels", mask.count, mask.width * mask.height)
    return mask


def _finish(cfg: RunConfig, restored: ImageBuffer, stats: RunStats):
    save_image(restored, cfg.output)
    logger.info("wrote %s", cfg.output)
    print(stats.summary())
    if cfg.reference is not None:
        print(report(load_image(cfg.reference), restored).format())


def cmd_inpaint(cfg: RunConfig) -> int:
    img = load_image(cfg.input)
    mask = _resolve_mask(cfg, img)
    restored, stats = run_method(cfg.method, img, mask, cfg.params, on_iteration=_progress(cfg, cfg.method))
    if cfg.dump_fields is not None:
        p = cfg.params
        dump_fields(eigen_decompose(structure_tensor(restored, p.sigma, p.rho), p.eps), cfg.dump_fields)
    _finish(cfg, restored, stats)
    return EXIT_OK


def cmd_denoise(cfg: RunConfig) -> int:
    img = load_image(cfg.input)
    restored, stats = run_method("ced", img, None, cfg.params, cfg.ced, on_iteration=_progress(cfg, "ced"))
    _finish(cfg, restored, stats)
    return EXIT_OK


def cmd_metrics(cfg: RunConfig) -> int:
    result = report(load_image(cfg.input), load_image(cfg.reference))
    print(result.format())
    if cfg.json_path is not None:
        cfg.json_path.write_text(result.to_json() + "\n", encoding="utf-8")
    return EXIT_OK


def benchmark(
    truth: ImageBuffer, mask: Mask, p: DiffusionParams, image_name: str, timing: bool = True,
    progress: Optional[Callable[[str], Progress]] = None,
) -> List[dict]:
    """Damage truth under mask, run every inpainting method on it and score each result"""
    damaged = damage(truth, mask)
    rows = []
    for method in INPAINT_METHODS:
        observer = progress(method) if progress else None
        restored, stats = run_method(method, damaged, mask, p, on_iteration=observer)
        rows.append(report(truth, restored).row(method, image_name, stats.iterations,
                                                stats.seconds if timing else None))
        logger.info("%s: %s", method, stats.summary())
    ranked = sorted(rows, key=lambda r: r["psnr_db"], reverse=True)
    logger.info("PSNR ranking: %s", " > ".join(r["method"] for r in ranked))
    return rows


def cmd_bench(cfg: RunConfig) -> int:
    if cfg.synthetic is not None:
        case = make(cfg.synthetic, cfg.size, cfg.hole, cfg.mask_shape, cfg.scratch_width)
        truth, mask, name = case.truth, case.mask, f"synthetic-{cfg.synthetic}"
        if cfg.mask_shape != "square":
            name = f"{name}-{cfg.mask_shape}"
    else:
        truth = load_image(cfg.input)
        mask = mask_from_file(cfg.mask)
        check_pair(truth, mask)
        name = cfg.input.name

    snapshot_root = cfg.snapshot_dir
    if cfg.snapshot_every and snapshot_root is None:
        snapshot_root = cfg.csv_path.parent if cfg.csv_path is not None else Path(".")

    def progress(method: str) -> Progress:
        # one snapshot directory per method
        directory = snapshot_root / method if cfg.snapshot_every else None
        return Progress(method, cfg.params.iterations, cfg.snapshot_every, directory)

    rows = benchmark(truth, mask, cfg.params, name, timing=not cfg.no_timing, progress=progress)
    if cfg.csv_path is None:
        sys.stdout.write(rows_to_csv(rows))
    save_rows(rows, cfg.csv_path, cfg.json_path)
    if cfg.pdf_path is not None:
        from report_generator import ReportGenerator

        p = cfg.params
        ReportGenerator().generate_report(
            rows, cfg.pdf_path,
            {"dt": p.dt, "c": p.c, "k": p.k, "sigma": p.sigma, "rho": p.rho, "iters": p.iterations},
        )
        logger.info("wrote %s", cfg.pdf_path)
    return EXIT_OK


def cmd_synth(cfg: RunConfig) -> int:
    case = make(cfg.synthetic, cfg.size, cfg.hole, cfg.mask_shape, cfg.scratch_width)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    prefix = cfg.out_dir / cfg.synthetic
    save_image(case.truth, f"{prefix}_truth.png")
    save_image(case.damaged, f"{prefix}_damaged.png")
    save_mask(case.mask, f"{prefix}_mask.png")
    print(f"{prefix}_truth.png {prefix}_damaged.png {prefix}_mask.png")
    logger.info("%s %dx%d, hole %d pixels, key colour %s", cfg.synthetic, cfg.size, cfg.size,
                case.mask.count, KEY_COLOR)
    return EXIT_OK


COMMANDS: Dict[str, Callable[[RunConfig], int]] = {
    "inpaint": cmd_inpaint,
    "denoise": cmd_denoise,
    "metrics": cmd_metrics,
    "bench": cmd_bench,
    "synth": cmd_synth,
}


def _fail(code: int, kind: str, exc: BaseException) -> int:
    print(f"error: {kind}: {exc}", file=sys.stderr)
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(message)s"))
    root = logging.getLogger()
    previous_level = root.level
    root.addHandler(handler)
    root.setLevel(logging.WARNING if args.quiet else logging.DEBUG if args.verbose else logging.INFO)
    try:
        cfg = build_config(args)
        if cfg.threads is not None:
            cv2.setNumThreads(cfg.threads)
        return COMMANDS[cfg.subcommand](cfg)
    except DivergenceError as e:
        return _fail(EXIT_DIVERGENCE, "divergence", e)
    except DimensionMismatchError as e:
        return _fail(EXIT_IO, "dimension mismatch", e)
    except (ImageIOError, OSError) as e:
        return _fail(EXIT_IO, "io", e)
    except EmptyBoundaryError as e:
        return _fail(EXIT_USAGE, "full-image mask", e)
    except (UsageError, ConfigError, ValueError) as e:
        return _fail(EXIT_USAGE, "usage", e)
    finally:
        root.removeHandler(handler)
        root.setLevel(previous_level)


if __name__ == "__main__":
    sys.exit(main())
