#!/usr/bin/env python3
"""
Near-Field Depth Evaluation - Command Line
Subcommands chaining the radar imaging, geometry, metric and analysis modules through files
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from models import DepthEvalError, ProjectionModel, Transform4
from config import PipelineConfig, load_config_file
from dataset_io import (
    load_calibration, read_json_document, load_capture_manifest, load_depth_image, load_erosion_metadata, load_mask,
    load_mesh, load_raw_cube, save_depth_image, save_point_cloud, save_raw_cube,
)
from geometry import align_to_sensor, average_frames, rasterize_mesh_depth, unproject
from radar_imaging import backproject, db_threshold_filter, max_projection
from radar_signal import simulate_fscw
from metrics import evaluate_manifest, load_results, write_results
from analysis import DEFAULT_RADAR_SENSOR, DepthResultAnalyzer, object_statistics
from resolution import (
    AmcwParams, MimoResolutionParams, StereoParams, amcw_range_res, mimo_resolution,
    rayleigh_angular, stereo_depth, stereo_depth_res, wavelength,
)
from simulator import SyntheticSceneSimulator, scene_from_dict

logger = logging.getLogger("depth_eval")

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class UsageError(Exception):
    """Missing or contradictory command-line options; exits like an argparse error"""


def _done(message: str):
    print(f"✓ {message}")


def _config(args) -> PipelineConfig:
    base = load_config_file(args.config) if getattr(args, "config", None) else PipelineConfig()
    overrides = {
        "seed": args.seed,
        "threads": args.threads,
        "manifest": getattr(args, "manifest", None),
        "sensors": getattr(args, "sensors", None),
        "distances": getattr(args, "distances", None),
        "erosion": getattr(args, "erosion", None),
        "out": getattr(args, "out", None),
        "threshold_db": getattr(args, "db", None),
        "radar_sensor": getattr(args, "radar_sensor", None),
        "grid_origin": getattr(args, "origin", None),
        "grid_step": getattr(args, "step", None),
        "grid_dims": getattr(args, "dims", None),
    }
    for key in ("grid_origin", "grid_step", "grid_dims"):
        if overrides[key] is not None:
            overrides[key] = tuple(overrides[key])
    return base.merged(overrides)


# ---------------------------------------------------------------------------
# Subcommands

def cmd_simulate(args) -> int:
    cfg = _config(args)
    if args.scene and args.random_scatterers:
        raise UsageError("--scene and --random-scatterers are mutually exclusive")
    if args.scene:
        scene = read_json_document(args.scene, "scene")
    elif args.random_scatterers:
        scene = SyntheticSceneSimulator(cfg.seed).random_scene(args.random_scatterers, n_f=args.n_f)
    else:
        raise UsageError("either --scene or --random-scatterers is required")
    array, fscw, scatterers, spreading = scene_from_dict(scene)
    cube = simulate_fscw(scatterers, array, fscw, spreading=spreading or args.spreading, n_jobs=cfg.threads)
    save_raw_cube(args.out, cube)
    _done(f"simulated {len(scatterers)} scatterers -> {args.out}")
    return 0


def cmd_backproject(args) -> int:
    cfg = _config(args).validate(check_paths=False)
    cube = load_raw_cube(args.cube)
    depth, confidence = max_projection(backproject(cube, cfg.grid(), n_jobs=cfg.threads))
    save_depth_image(args.out, depth)
    save_depth_image(args.confidence, depth.with_data(confidence))
    _done(f"backprojected {cfg.grid().n_voxels} voxels -> {args.out}, {args.confidence}")
    return 0


def cmd_filter(args) -> int:
    threshold_db = _config(args).validate(check_paths=False).threshold_db
    depth = load_depth_image(args.depth)
    confidence = load_depth_image(args.confidence).data
    filtered = db_threshold_filter(depth, confidence, threshold_db)
    save_depth_image(args.out, filtered)
    _done(f"kept {int(filtered.valid_mask().sum())} of {filtered.data.size} pixels at {threshold_db:g} dB")
    return 0


def cmd_unproject(args) -> int:
    depth = load_depth_image(args.depth)
    mask = load_mask(args.mask) if args.mask else None
    cloud = unproject(depth, mask)
    save_point_cloud(args.out, cloud)
    _done(f"unprojected {len(cloud)} points -> {args.out}")
    return 0


def _projection_from_args(args) -> ProjectionModel:
    if args.fx is not None and args.ortho_step is not None:
        raise UsageError("--fx and --ortho-step are mutually exclusive")
    if args.fx is not None:
        return ProjectionModel.perspective(args.fx, args.fy or args.fx, args.cx, args.cy)
    if args.ortho_step is not None:
        origin = args.ortho_origin or (0.0, 0.0)
        return ProjectionModel.orthographic(args.ortho_step[0], args.ortho_step[1], origin[0], origin[1])
    raise UsageError("rasterize needs --like, --fx/--cx/--cy or --ortho-step")


def cmd_rasterize(args) -> int:
    cfg = _config(args)
    mesh = load_mesh(args.mesh)
    if args.calibration:
        mesh = align_to_sensor(mesh, load_calibration(args.calibration))
    if args.like and (args.fx is not None or args.ortho_step is not None):
        raise UsageError("--like cannot be combined with --fx or --ortho-step")
    if args.like:
        ref = load_depth_image(args.like)
        projection, transform, width, height = ref.projection, ref.transform, ref.width, ref.height
    else:
        if args.width is None or args.height is None:
            raise UsageError("--width and --height are required without --like")
        projection, transform = _projection_from_args(args), Transform4.identity()
        width, height = args.width, args.height
    depth = rasterize_mesh_depth(mesh, projection, transform, width, height, n_jobs=cfg.threads)
    save_depth_image(args.out, depth)
    _done(f"rasterized {len(mesh.faces)} triangles -> {args.out}")
    return 0


def cmd_average(args) -> int:
    averaged = average_frames([load_depth_image(p) for p in args.frames])
    save_depth_image(args.out, averaged)
    _done(f"averaged {len(args.frames)} frames -> {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    out = Path(cfg.out)
    erosion_path = cfg.erosion
    if cfg.manifest is None:
        raise UsageError("--manifest is required (flag or config file)")
    if str(cfg.manifest) == "demo":
        manifest_path = SyntheticSceneSimulator(cfg.seed).build_demo_dataset(out / "demo", n_jobs=cfg.threads)
        erosion_path = erosion_path or manifest_path.parent / "erosion.json"
    else:
        manifest_path = Path(cfg.manifest)
    cfg.validate()

    manifest = load_capture_manifest(manifest_path, cfg.sensors or None, cfg.distances or None)
    reports = evaluate_manifest(manifest, load_erosion_metadata(erosion_path), n_jobs=cfg.threads)
    objects = object_statistics(manifest, cfg.radar_sensor)
    json_path, csv_path = write_results(reports, out, objects)
    _done(f"evaluated {len(reports)} captures -> {json_path}, {csv_path}")
    return 0


def cmd_analyze(args) -> int:
    radar_sensor = _config(args).radar_sensor
    reports, objects = load_results(args.reports)
    analyzer = DepthResultAnalyzer(reports, objects)
    written = analyzer.emit_plot_data(args.out, radar_sensor=radar_sensor)
    summary = analyzer.material_summary(radar_sensor)
    if not summary.empty:
        summary.to_csv(Path(args.out) / "materials.csv", index=False, float_format="%.9g", lineterminator="\n")
    _done(f"wrote {len(written)} plot files to {args.out}")
    return 0


def _mm(value: float) -> str:
    return f"{value * 1e3:.2f} mm"


def cmd_resolution(args) -> int:
    if args.sensor == "mimo":
        for z in args.z:
            params = MimoResolutionParams(args.fmin, args.fmax, args.L, z)
            values = mimo_resolution(params)
            if len(args.z) > 1:
                print(f"z={z:g} m")
            for name in ("delta_x", "delta_y", "delta_z"):
                print(f"{name}={_mm(values[name])}")
        omega = rayleigh_angular(wavelength(args.fmax), args.L)
        print(f"omega={omega:.5f} rad")
    elif args.sensor == "stereo":
        params = StereoParams(args.baseline, args.focal, args.disparity or 0.0, args.disparity_res, args.z[0])
        if args.disparity:
            print(f"depth={stereo_depth(params):.4f} m")
        print(f"delta_z={_mm(stereo_depth_res(params))}")
    else:
        params = AmcwParams(args.fm, args.p_laser, args.p_ambient, args.intensity, args.qe,
                            args.ko, args.rho, args.dt)
        print(f"delta_z={_mm(amcw_range_res(params))}")
    return 0


def cmd_demo(args) -> int:
    cfg = _config(args)
    manifest = SyntheticSceneSimulator(cfg.seed).build_demo_dataset(args.out, n_jobs=cfg.threads)
    _done(f"demo dataset -> {manifest}")
    return 0


# ---------------------------------------------------------------------------
# Parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=0, help="-v progress, -vv debug")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--threads", type=int, default=None, help="default: $DEPTH_EVAL_THREADS or 1")
    common.add_argument("--config", type=Path, default=None, help="key = value file mirroring the flags")

    parser = argparse.ArgumentParser(prog="depth-eval", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate raw FSCW phasors of a point scene")
    p.add_argument("--scene", type=Path)
    p.add_argument("--random-scatterers", type=int)
    p.add_argument("--n-f", type=int, default=32)
    p.add_argument("--spreading", action="store_true")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("backproject", parents=[common], help="image a raw cube into depth + confidence")
    p.add_argument("--cube", type=Path, required=True)
    p.add_argument("--origin", type=float, nargs=3)
    p.add_argument("--step", type=float, nargs=3)
    p.add_argument("--dims", type=int, nargs=3)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--confidence", type=Path, required=True)
    p.set_defaults(func=cmd_backproject)

    p = sub.add_parser("filter", parents=[common], help="drop pixels below a dB confidence threshold")
    p.add_argument("--depth", type=Path, required=True)
    p.add_argument("--confidence", type=Path, required=True)
    p.add_argument("--db", type=float, default=None, help="default: config threshold_db, -14")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("unproject", parents=[common], help="depth map to xyz point cloud")
    p.add_argument("--depth", type=Path, required=True)
    p.add_argument("--mask", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_unproject)

    p = sub.add_parser("rasterize", parents=[common], help="render a mesh into a depth map")
    p.add_argument("--mesh", type=Path, required=True)
    p.add_argument("--like", type=Path, help="copy projection, transform and size from this depth map")
    p.add_argument("--calibration", type=Path, help="GT-to-sensor transform applied to the mesh first")
    p.add_argument("--fx", type=float)
    p.add_argument("--fy", type=float)
    p.add_argument("--cx", type=float, default=0.0)
    p.add_argument("--cy", type=float, default=0.0)
    p.add_argument("--ortho-step", type=float, nargs=2)
    p.add_argument("--ortho-origin", type=float, nargs=2)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_rasterize)

    p = sub.add_parser("average", parents=[common], help="per-pixel mean of depth frames")
    p.add_argument("--frames", type=Path, nargs="+", required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_average)

    p = sub.add_parser("evaluate", parents=[common], help="compute C1/C2/P1/P2 for a capture manifest")
    p.add_argument("--manifest", help="manifest.json, or 'demo' for the synthetic dataset")
    p.add_argument("--sensors", nargs="+")
    p.add_argument("--distances", type=int, nargs="+")
    p.add_argument("--erosion", type=Path)
    p.add_argument("--radar-sensor", help=f"default: {DEFAULT_RADAR_SENSOR}")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("analyze", parents=[common], help="boxplot, scatter and barycentric tables")
    p.add_argument("--reports", type=Path, required=True)
    p.add_argument("--radar-sensor", help=f"default: {DEFAULT_RADAR_SENSOR}")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("resolution", parents=[common], help="closed-form resolution limits")
    p.add_argument("--sensor", choices=["mimo", "stereo", "amcw"], default="mimo")
    p.add_argument("--fmin", type=float, default=72e9)
    p.add_argument("--fmax", type=float, default=82e9)
    p.add_argument("--L", type=float, default=0.138)
    p.add_argument("--z", type=float, nargs="+", default=[0.30])
    p.add_argument("--baseline", type=float)
    p.add_argument("--focal", type=float)
    p.add_argument("--disparity", type=float)
    p.add_argument("--disparity-res", type=float, default=1.0)
    p.add_argument("--fm", type=float)
    p.add_argument("--p-laser", type=float)
    p.add_argument("--p-ambient", type=float, default=0.0)
    p.add_argument("--intensity", type=float)
    p.add_argument("--qe", type=float)
    p.add_argument("--ko", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--dt", type=float)
    p.set_defaults(func=cmd_resolution)

    p = sub.add_parser("demo", parents=[common], help="write the synthetic demo dataset")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_demo)
    for command in sub.choices.values():
        command.set_defaults(command_parser=command)
    return parser


def _check_resolution_args(parser: argparse.ArgumentParser, args):
    required = {
        "stereo": ("baseline", "focal"),
        "amcw": ("fm", "p_laser", "intensity", "qe", "ko", "rho", "dt"),
    }.get(args.sensor, ())
    missing = [name for name in required if getattr(args, name) is None]
    if missing:
        parser.error(f"resolution --sensor {args.sensor} needs " + ", ".join("--" + m.replace("_", "-") for m in missing))


def run(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "resolution":
            _check_resolution_args(parser, args)
    except SystemExit as exc:
        return int(exc.code or 0)

    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)

    try:
        return args.func(args)
    except UsageError as exc:
        try:
            args.command_parser.error(str(exc))
        except SystemExit as stop:
            return int(stop.code)
    except (DepthEvalError, OSError) as exc:
        message = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {message}", file=sys.stderr)
        logger.debug("command %s failed", args.command, exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(run())
