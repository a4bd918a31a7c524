"""Command-line entry point.

Subcommands:

  simulate <config>   run the deformation phases, write depth maps
  pipeline <config>   full run: depth maps, meshes, rendered images
  render <depth>      render a single stored depth map
  compare <a> <b>     metric report over matching images in two trees

Exit codes: 0 success, 1 validation error, 2 simulation fault,
3 I/O error. TACSIM_THREADS overrides the worker-thread count; results
do not depend on it.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..errors import (AlignmentError, ConfigurationError, ExtractionError,
                      RenderError, SimulationFault)
from ..metrics import compare_images, format_report
from ..render.pathtrace import render_path_traced
from ..render.phong import render_phong
from ..render.scene import (build_scene, flat_texture, get_profile,
                            load_png, load_texture, save_png)
from ..surface import depth_to_mesh, load_depth
from ..threads import set_threads, threads_from_env
from .config import parse_scenario
from .pipeline import run_pipeline

log = logging.getLogger("tacsim")


def _add_scenario_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("config", help="scenario file")
    parser.add_argument("--out", help="override the configured output "
                                      "directory")
    parser.add_argument("--dry-run", action="store_true",
                        help="expand the trajectory and write the manifest "
                             "skeleton without simulating")
    parser.add_argument("--no-rest-check", action="store_true",
                        help="plain MPM baseline: single transfer cycle per "
                             "step, no pinning, no convergence iteration")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tacsim",
        description="Camera-based optical tactile sensor simulation")
    parser.add_argument("--threads", type=int, metavar="N",
                        help="worker threads (default: TACSIM_THREADS or "
                             "all cores)")
    parser.add_argument("--verbose", action="store_true",
                        help="log per-phase progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run phases, write depth maps")
    _add_scenario_arguments(p)

    p = sub.add_parser("pipeline", help="full run incl. meshes and images")
    _add_scenario_arguments(p)

    p = sub.add_parser("render", help="render one stored depth map")
    p.add_argument("depth_file")
    p.add_argument("--profile", default="gelsight-desk")
    p.add_argument("--phong", action="store_true",
                   help="use the Phong baseline instead of path tracing")
    p.add_argument("--spp", type=int, help="samples per pixel "
                                           "(default: profile setting)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-bounces", type=int, default=4)
    p.add_argument("--texture", help="base texture PNG "
                                     "(default: flat mid-gray)")
    p.add_argument("--out", help="output PNG (default: depth file with "
                                 ".png suffix)")

    p = sub.add_parser("compare", help="metric report over two image trees")
    p.add_argument("dir_a")
    p.add_argument("dir_b")
    p.add_argument("--out", default="report.csv")
    p.add_argument("--max-shift", type=int, default=20)
    return parser


def _cmd_scenario(args, with_images: bool) -> int:
    cfg = parse_scenario(args.config)
    if args.no_rest_check:
        cfg.improved = False
    if args.out:
        cfg.output_dir = Path(args.out)
    manifest = run_pipeline(cfg, dry_run=args.dry_run,
                            with_images=with_images)
    print(f"{manifest['captures']} captures, {len(manifest['files'])} files "
          f"-> {cfg.output_dir}")
    return 0


def _cmd_render(args) -> int:
    depth = load_depth(args.depth_file)
    mesh = depth_to_mesh(depth)
    profile = get_profile(args.profile)
    texture = load_texture(args.texture) if args.texture else flat_texture()
    scene = build_scene(mesh, texture, profile)
    if args.phong:
        image = render_phong(scene)
    else:
        spp = args.spp or profile.spp
        image = render_path_traced(scene, samples_per_pixel=spp,
                                   max_bounces=args.max_bounces,
                                   seed=args.seed)
    out = Path(args.out) if args.out else \
        Path(args.depth_file).with_suffix(".png")
    save_png(image, out)
    print(out)
    return 0


def _cmd_compare(args) -> int:
    root_a, root_b = Path(args.dir_a), Path(args.dir_b)
    for root in (root_a, root_b):
        if not root.is_dir():
            raise ConfigurationError(f"not a directory: {root}")
    names_a = {p.relative_to(root_a).as_posix()
               for p in root_a.rglob("*.png")}
    names_b = {p.relative_to(root_b).as_posix()
               for p in root_b.rglob("*.png")}
    for name in sorted(names_a ^ names_b):
        side = args.dir_a if name in names_a else args.dir_b
        log.warning("skipping %s (only in %s)", name, side)
    matched = sorted(names_a & names_b)
    if not matched:
        raise ConfigurationError(
            f"no matching images between {root_a} and {root_b}")
    rows = []
    for name in matched:
        report = compare_images(load_png(root_a / name),
                                load_png(root_b / name),
                                max_shift=args.max_shift)
        rows.append((name, report))
    Path(args.out).write_text(format_report(rows), encoding="utf-8")
    print(f"{len(rows)} pairs -> {args.out}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    threads_from_env()
    if args.threads:
        set_threads(args.threads)
    try:
        if args.command == "simulate":
            return _cmd_scenario(args, with_images=False)
        if args.command == "pipeline":
            return _cmd_scenario(args, with_images=True)
        if args.command == "render":
            return _cmd_render(args)
        return _cmd_compare(args)
    except (ConfigurationError, AlignmentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (SimulationFault, ExtractionError, RenderError) as exc:
        print(f"simulation fault: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
