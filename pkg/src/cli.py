"""
Command-line interface for EmbedMap

    embedmap gen-rig --out rig_dir
    embedmap build-envmap --rig rig.json --frame 0 --size 512x256 --out user_%05d.pfm
    embedmap composite --fg user.pfm --bg scene.pfm --out composite.pfm
    embedmap render --scene scene.json --env composite.pfm --out frame.png
    embedmap convert --env in.pfm --param spheremap --size 256x256 --out out.pfm
    embedmap pipeline --config cfg.json
    embedmap bench --config cfg.json --repeat K

Exit codes: 0 success, 1 configuration or input error, 2 partial failure.
"""
from __future__ import annotations
import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from camera import load_rig
from config import MATTING_MODES, PARAM_NAMES, config_manager, parse_size
from envmap import convert
from errors import ConfigError, EmbedMapError, FrameError
from image_io import load_envmap, load_image, save_envmap, save_image
from pipeline import (PipelineConfig, load_clean_plates, matte_capture, read_frames, run_bench,
                      run_pipeline, warp_capture)
from render import load_scene, render_reflection
from run_logging import log_error, log_operation, setup_logging
from synthetic import ENVIRONMENTS, BillboardSpec, SyntheticRigSpec, generate_synthetic_rig, pole_rows_mask, psnr
from warp import MapSpec, composite_over, merge_views

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PARTIAL = 2


def _triple(text: str) -> tuple:
    try:
        values = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected three comma-separated numbers, got '{text}'")
    if len(values) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated numbers, got '{text}'")
    return values


# ---------------------------------------------------------------------------
# Commands

def cmd_gen_rig(args: argparse.Namespace) -> int:
    user = None
    if args.user:
        user = BillboardSpec(start=args.user_start, end=args.user_end or args.user_start,
                             radius=args.user_radius, color=args.user_color)
    width, height = parse_size(args.size)
    spec = SyntheticRigSpec(
        camera_count=args.cameras,
        fov_deg=args.fov,
        image_width=width,
        image_height=height,
        environment=args.env,
        env_color=args.env_color,
        user=user,
        first_frame=args.first,
        frame_count=args.frames,
        frame_format=args.format,
        ground_truth_size=parse_size(args.gt_size),
    )
    paths = generate_synthetic_rig(spec, args.out)
    log_operation("gen-rig", f"{spec.camera_count} cameras -> {paths['rig']}")
    return EXIT_OK


def cmd_build_envmap(args: argparse.Namespace) -> int:
    workers = config_manager.get_worker_count(args.threads)
    settings = config_manager.config
    spec = MapSpec.parse(args.size, args.param)
    cameras = load_rig(args.rig)

    mode = args.matting or ("clean-plate" if args.clean_plate else settings.matting.mode)
    plates = None
    if mode == "clean-plate":
        if args.clean_plate:
            # "%d" in the path selects a plate per camera index
            paths = [args.clean_plate % k if "%" in args.clean_plate else args.clean_plate
                     for k in range(len(cameras))]
            plates = [load_image(p) for p in paths]
        else:
            plates = load_clean_plates(cameras)
    t0 = settings.matting.key_t0 if args.key_t0 is None else args.key_t0
    t1 = settings.matting.key_t1 if args.key_t1 is None else args.key_t1

    frames = read_frames(cameras, args.frame)
    capture = matte_capture(cameras, frames, args.frame, mode, plates, t0, t1)
    user = merge_views(warp_capture(capture, spec, workers, settings.pipeline.band_rows))

    out = Path(args.out % args.frame if "%" in args.out else args.out)
    save_envmap(user, out)
    log_operation("build-envmap", f"frame {args.frame}, {len(cameras)} view(s) -> {out}")

    if args.compare:
        truth = load_envmap(args.compare)
        if not truth.same_layout(user):
            raise ConfigError(f"Cannot compare {user!r} against {truth!r}")
        mask = pole_rows_mask(user.height, user.width) if args.exclude_pole_rows else None
        print(f"PSNR vs {args.compare}: {psnr(user.texels, truth.texels, mask):.2f} dB")
    return EXIT_OK


def cmd_composite(args: argparse.Namespace) -> int:
    fg = load_envmap(args.fg)
    bg = load_envmap(args.bg)
    save_envmap(composite_over(fg, bg), args.out)
    log_operation("composite", f"{args.fg} over {args.bg} -> {args.out}")
    return EXIT_OK


def cmd_render(args: argparse.Namespace) -> int:
    workers = config_manager.get_worker_count(args.threads)
    scene = load_scene(args.scene)
    env = load_envmap(args.env)
    output = render_reflection(scene, env, workers, config_manager.config.pipeline.band_rows)
    save_image(args.out, output.image)
    log_operation("render", f"{args.scene} with {args.env} -> {args.out}")
    return EXIT_OK


def cmd_convert(args: argparse.Namespace) -> int:
    width, height = parse_size(args.size)
    env = load_envmap(args.env)
    save_envmap(convert(env, args.param, width, height), args.out)
    log_operation("convert", f"{args.env} -> {args.param} {width}x{height} {args.out}")
    return EXIT_OK


def cmd_pipeline(args: argparse.Namespace) -> int:
    cfg = PipelineConfig.load(args.config, workers=args.threads)
    result = run_pipeline(cfg)
    if result.report is not None:
        print(result.report.table)
    for error in result.errors:
        print(f"skipped {error}", file=sys.stderr)
    if not result.metrics:
        return EXIT_PARTIAL
    return result.exit_code


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = PipelineConfig.load(args.config, workers=args.threads)
    last, report = run_bench(cfg, args.repeat)
    print(report.table)
    return last.exit_code


# ---------------------------------------------------------------------------
# Parser

def build_parser() -> argparse.ArgumentParser:
    settings = config_manager.config

    # Global flags are accepted before or after the command name
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help="Worker threads (default: machine parallelism)")
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS,
                        help="Only log warnings and errors to the console")
    common.add_argument("--no-log-file", action="store_true", default=argparse.SUPPRESS,
                        help="Do not write log files")

    parser = argparse.ArgumentParser(prog="embedmap", description="Environment map compositing and reflection rendering",
                                     parents=[common])
    parser.set_defaults(threads=None, quiet=False, no_log_file=False)
    parser.add_argument("--version", action="version", version=f"%(prog)s {settings.app.version}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-rig", parents=[common], help="Generate a synthetic capture rig")
    p.add_argument("--out", required=True, type=Path, help="Output directory")
    p.add_argument("--cameras", type=int, default=6)
    p.add_argument("--fov", type=float, default=90.0, help="Field of view in degrees")
    p.add_argument("--size", default="256x256", help="Frame size WIDTHxHEIGHT")
    p.add_argument("--env", choices=sorted(ENVIRONMENTS), default="gradient")
    p.add_argument("--env-color", type=_triple, default=(0.5, 0.5, 0.5), help="Color of the constant environment")
    p.add_argument("--first", type=int, default=0)
    p.add_argument("--frames", type=int, default=1)
    p.add_argument("--format", choices=("png", "pfm"), default="png")
    p.add_argument("--gt-size", default="256x128", help="Ground-truth LatLong size")
    p.add_argument("--user", action="store_true", help="Add a moving user billboard")
    p.add_argument("--user-start", type=_triple, default=(0.0, 0.0, -3.0))
    p.add_argument("--user-end", type=_triple, default=None)
    p.add_argument("--user-radius", type=float, default=0.5)
    p.add_argument("--user-color", type=_triple, default=(1.0, 0.0, 0.0))
    p.set_defaults(func=cmd_gen_rig)

    p = sub.add_parser("build-envmap", parents=[common], help="Warp and merge one rig frame into a user map")
    p.add_argument("--rig", required=True, type=Path)
    p.add_argument("--frame", type=int, default=0)
    p.add_argument("--param", choices=PARAM_NAMES, default=settings.envmap.param)
    p.add_argument("--size", default=f"{settings.envmap.width}x{settings.envmap.height}")
    p.add_argument("--out", required=True, help="Output map; a %%05d pattern takes the frame index")
    p.add_argument("--matting", choices=MATTING_MODES, default=None)
    p.add_argument("--clean-plate", default=None, help="Clean plate image (a %%d pattern selects one per camera)")
    p.add_argument("--key-t0", type=float, default=None)
    p.add_argument("--key-t1", type=float, default=None)
    p.add_argument("--compare", default=None, help="Report PSNR against this ground-truth map")
    p.add_argument("--exclude-pole-rows", action="store_true")
    p.set_defaults(func=cmd_build_envmap)

    p = sub.add_parser("composite", parents=[common], help="Composite a user map over a scene map")
    p.add_argument("--fg", required=True)
    p.add_argument("--bg", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_composite)

    p = sub.add_parser("render", parents=[common], help="Render Fresnel reflections of a map")
    p.add_argument("--scene", required=True)
    p.add_argument("--env", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("convert", parents=[common], help="Resample a map into another parameterization")
    p.add_argument("--env", required=True)
    p.add_argument("--param", choices=PARAM_NAMES, required=True)
    p.add_argument("--size", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("pipeline", parents=[common], help="Run the frame pipeline")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("bench", parents=[common], help="Benchmark the frame pipeline")
    p.add_argument("--config", required=True)
    p.add_argument("--repeat", type=int, default=3)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    run_logger = setup_logging(quiet=args.quiet, to_file=False if args.no_log_file else None)
    run_logger.log_startup_info(config_manager.get_worker_count(args.threads))

    try:
        return args.func(args)
    except (ConfigError, FrameError) as e:
        log_error(f"{args.command} failed: {e}")
        return EXIT_CONFIG
    except (EmbedMapError, OSError) as e:
        log_error(f"{args.command} failed", e)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
