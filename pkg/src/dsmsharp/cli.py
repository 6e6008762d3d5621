"""Command-line front end: one subcommand per pipeline stage plus run-all.

Every stage reads and writes plain files (ASCII grids, PGM/PPM, CSV) so
intermediate products stay inspectable, and all outputs are deterministic:
re-running a subcommand on unchanged inputs reproduces byte-identical files.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import evaluate as ev
from . import graphcut as gc
from . import lines as ln
from . import planefit as pf
from . import raster, synth
from .config import PipelineConfig, build_config
from .tophat import boundary_contours, build_stack, building_mask

logger = logging.getLogger("dsmsharp")


def _require_file(path: Path | None, what: str) -> Path:
    if path is None:
        raise ValueError(f"no {what} path configured (flag --{what} or config key '{what}')")
    if not Path(path).is_file():
        raise FileNotFoundError(f"{what} file not found: {path}")
    return Path(path)


def _outdir(cfg: PipelineConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _config_from_args(args) -> PipelineConfig:
    overrides: dict[str, str] = {}
    for item in args.set or []:
        if "=" not in item:
            raise ValueError(f"--set expects key=value, got {item!r}")
        key, _, val = item.partition("=")
        overrides[key.strip()] = val.strip()
    for flag in ("dsm", "ortho", "truth", "out"):
        val = getattr(args, flag, None)
        if val is not None:
            overrides[flag] = val
    return build_config(args.config, overrides)


# ---------------------------------------------------------------------------
# Pipeline steps shared between subcommands
# ---------------------------------------------------------------------------


def _mask_products(dsm, cfg):
    stack = build_stack(dsm, cfg.tophat)
    mask = building_mask(stack)
    contours = boundary_contours(stack)
    contour_mask = raster.rasterize_contours(contours, dsm.values.shape)
    return stack, mask, contours, contour_mask


def _detect_products(ortho, stack, contour_mask, cfg):
    gray = raster.grayscale(ortho)
    raw = ln.detect_segments(gray, cfg.detector)
    filtered = ln.filter_segments(raw, contour_mask, cfg.boundary_buffer_radius)
    filtered = ln.assign_widths(filtered, stack, cfg.overlap_radius)
    return raw, filtered


def _sharpen_graphcut(dsm, contours, contour_mask, segments, cfg, outdir=None, debug=False):
    if not contours:
        logger.warning("no boundary contours; graph-cut leaves the DSM unchanged")
        return dsm.copy()
    gcc = cfg.graphcut
    problem = gc.build_problem(
        contours,
        segments,
        dsm.values.shape,
        line_buffer_radius=gcc.line_buffer_radius,
        **gcc.problem_constants(),
    )
    labeling = gc.minimize(problem)
    field = gc.interpolate_offsets(
        problem, labeling, contour_mask, dsm.values.shape, far_distance=gcc.far_distance
    )
    if debug and outdir is not None:
        gc.save_labeling_csv(problem, labeling, outdir / "labeling.csv")
        raster.save_heightfield(dsm.like(field.dx), outdir / "offsets_dx.asc")
        raster.save_heightfield(dsm.like(field.dy), outdir / "offsets_dy.asc")
    return gc.warp_dsm(dsm, field)


def _sharpen_planefit(dsm, segments, cfg, outdir=None, debug=False):
    rows: list | None = [] if debug else None
    adjusted = pf.adjust_all(dsm, segments, cfg.fit, debug_rows=rows)
    if debug and outdir is not None:
        pf.save_planes_csv(rows or [], outdir / "planes.csv")
    return adjusted


def _same_grid(a, b) -> bool:
    return (
        a.values.shape == b.values.shape
        and a.cell_size == b.cell_size
        and a.origin == b.origin
    )


def _evaluate_products(truth, original, variants, cfg, outdir):
    """RMSE report + sweeps (+ optional cross-section) on the truth grid."""
    on_truth = {}
    for name, hf in [("original", original)] + list(variants.items()):
        on_truth[name] = hf if _same_grid(truth, hf) else ev.resample_to(truth, hf)

    stack, _, _, contour_mask = _mask_products(on_truth["original"], cfg)
    if contour_mask.count() == 0:
        raise ValueError("no boundary contours on the original DSM; nothing to evaluate against")

    rows = []
    for name, hf in on_truth.items():
        rep = ev.report(hf, truth, contour_mask, cfg.eval_widths)
        rows.append((cfg.region, name, rep))
        pairs = ev.sweep(hf, truth, contour_mask, cfg.sweep_max_width)
        ev.write_sweep_csv(pairs, outdir / f"sweep_{name}.csv")
    ev.write_report_csv(rows, outdir / "rmse_report.csv")

    if cfg.section is not None:
        x1, y1, x2, y2 = cfg.section
        section_variants = {"truth": truth, **on_truth}
        section = ev.cross_section(section_variants, ((x1, y1), (x2, y2)), truth_name="truth")
        ev.write_cross_section_csv(section, outdir / "cross_section.csv")
    return rows


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = _config_from_args(args)
    scene = synth.parse_scene_config(_require_file(Path(args.scene), "scene"))
    truth, smeared, ortho = synth.generate(scene)
    out = _outdir(cfg)
    raster.save_heightfield(truth, out / "truth.asc")
    raster.save_heightfield(smeared, out / "smeared.asc")
    raster.save_image(ortho, out / "ortho.pgm")
    logger.info("synth: wrote truth.asc, smeared.asc, ortho.pgm to %s", out)
    return 0


def cmd_extract_mask(args) -> int:
    cfg = _config_from_args(args)
    dsm = raster.load_heightfield(_require_file(cfg.dsm, "dsm"))
    stack, mask, _, contour_mask = _mask_products(dsm, cfg)
    out = _outdir(cfg)
    raster.save_mask(mask, out / "building_mask.pgm")
    raster.save_mask(contour_mask, out / "boundary_contours.pgm")
    if args.dump_stack:
        stack_dir = out / "stack"
        stack_dir.mkdir(exist_ok=True)
        for scale, cum, cimg in zip(stack.scales, stack.cumulative_masks, stack.contour_images):
            raster.save_mask(cum, stack_dir / f"mask_{scale:03d}.pgm")
            raster.save_mask(cimg, stack_dir / f"contours_{scale:03d}.pgm")
    logger.info("extract-mask: %d building pixels", mask.count())
    return 0


def cmd_detect_lines(args) -> int:
    cfg = _config_from_args(args)
    dsm = raster.load_heightfield(_require_file(cfg.dsm, "dsm"))
    ortho = raster.load_image(_require_file(cfg.ortho, "ortho"))
    stack, _, _, contour_mask = _mask_products(dsm, cfg)
    raw, filtered = _detect_products(ortho, stack, contour_mask, cfg)
    out = _outdir(cfg)
    ln.save_segments_csv(raw, out / "segments_raw.csv")
    ln.save_segments_csv(filtered, out / "segments_filtered.csv")
    logger.info("detect-lines: %d raw, %d filtered segments", len(raw), len(filtered))
    return 0


def cmd_sharpen(args) -> int:
    cfg = _config_from_args(args)
    dsm = raster.load_heightfield(_require_file(cfg.dsm, "dsm"))
    out = _outdir(cfg)
    seg_path = Path(args.segments) if args.segments else out / "segments_filtered.csv"
    segments = ln.load_segments_csv(_require_file(seg_path, "segments"))
    if args.method == "graphcut":
        _, _, contours, contour_mask = _mask_products(dsm, cfg)
        adjusted = _sharpen_graphcut(
            dsm, contours, contour_mask, segments, cfg, out, debug=args.debug
        )
    else:
        adjusted = _sharpen_planefit(dsm, segments, cfg, out, debug=args.debug)
    raster.save_heightfield(adjusted, out / f"adjusted_{args.method}.asc")
    logger.info("sharpen: wrote adjusted_%s.asc", args.method)
    return 0


def cmd_evaluate(args) -> int:
    cfg = _config_from_args(args)
    truth = raster.load_heightfield(_require_file(cfg.truth, "truth"))
    original = raster.load_heightfield(_require_file(cfg.dsm, "dsm"))
    variants = {}
    for item in args.variant or []:
        if "=" not in item:
            raise ValueError(f"--variant expects name=path, got {item!r}")
        name, _, path = item.partition("=")
        variants[name.strip()] = raster.load_heightfield(_require_file(Path(path), "variant"))
    out = _outdir(cfg)
    rows = _evaluate_products(truth, original, variants, cfg, out)
    for region, name, rep in rows:
        buf = " ".join(f"buf{w}={rep.per_buffer[w]:.3f}" for w in sorted(rep.per_buffer))
        print(f"{region} {name}: whole={rep.whole_image:.3f} {buf}")
    return 0


def cmd_run_all(args) -> int:
    cfg = _config_from_args(args)
    dsm = raster.load_heightfield(_require_file(cfg.dsm, "dsm"))
    ortho = raster.load_image(_require_file(cfg.ortho, "ortho"))
    truth = raster.load_heightfield(_require_file(cfg.truth, "truth"))
    out = _outdir(cfg)

    stack, mask, contours, contour_mask = _mask_products(dsm, cfg)
    raster.save_mask(mask, out / "building_mask.pgm")
    raster.save_mask(contour_mask, out / "boundary_contours.pgm")

    raw, filtered = _detect_products(ortho, stack, contour_mask, cfg)
    ln.save_segments_csv(raw, out / "segments_raw.csv")
    ln.save_segments_csv(filtered, out / "segments_filtered.csv")
    logger.info("run-all: %d raw, %d filtered segments", len(raw), len(filtered))

    methods = ["graphcut", "planefit"] if args.method == "both" else [args.method]
    variants = {}
    for method in methods:
        if method == "graphcut":
            adjusted = _sharpen_graphcut(
                dsm, contours, contour_mask, filtered, cfg, out, debug=args.debug
            )
        else:
            adjusted = _sharpen_planefit(dsm, filtered, cfg, out, debug=args.debug)
        raster.save_heightfield(adjusted, out / f"adjusted_{method}.asc")
        variants[method] = adjusted

    rows = _evaluate_products(truth, dsm, variants, cfg, out)
    for region, name, rep in rows:
        buf = " ".join(f"buf{w}={rep.per_buffer[w]:.3f}" for w in sorted(rep.per_buffer))
        print(f"{region} {name}: whole={rep.whole_image:.3f} {buf}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", type=Path, default=None, help="key = value config file")
    sub.add_argument("--out", default=None, help="output directory")
    sub.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="override any config key, e.g. --set tophat.height_threshold=2.0",
    )
    sub.add_argument("--verbose", action="store_true", help="chatty logging")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dsmsharp",
        description="Sharpen smeared DSM building boundaries using orthophoto line segments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic truth/smeared/ortho triple")
    p.add_argument("--scene", required=True, help="scene description file")
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract-mask", help="multi-scale tophat building mask from the DSM")
    p.add_argument("--dsm", default=None)
    p.add_argument("--dump-stack", action="store_true", help="also write every per-scale mask")
    _add_common(p)
    p.set_defaults(func=cmd_extract_mask)

    p = sub.add_parser("detect-lines", help="detect, filter and width-annotate line segments")
    p.add_argument("--dsm", default=None)
    p.add_argument("--ortho", default=None)
    _add_common(p)
    p.set_defaults(func=cmd_detect_lines)

    p = sub.add_parser("sharpen", help="adjust the DSM with one method")
    p.add_argument("--method", choices=("graphcut", "planefit"), required=True)
    p.add_argument("--dsm", default=None)
    p.add_argument("--segments", default=None, help="filtered segment CSV (default: <out>/segments_filtered.csv)")
    p.add_argument("--debug", action="store_true", help="write method-specific debug dumps")
    _add_common(p)
    p.set_defaults(func=cmd_sharpen)

    p = sub.add_parser("evaluate", help="RMSE report, sweeps and cross-sections vs. truth")
    p.add_argument("--dsm", default=None, help="the original (unadjusted) DSM")
    p.add_argument("--truth", default=None)
    p.add_argument("--variant", action="append", metavar="NAME=PATH", help="adjusted DSM to score")
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run-all", help="extract-mask, detect-lines, sharpen and evaluate in one go")
    p.add_argument("--dsm", default=None)
    p.add_argument("--ortho", default=None)
    p.add_argument("--truth", default=None)
    p.add_argument("--method", choices=("graphcut", "planefit", "both"), default="both")
    p.add_argument("--debug", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_run_all)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
