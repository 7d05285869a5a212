"""Command-line entry point.

Subcommands::

    eval            AP table (and optional CSV) for KITTI result directories
    nms             density soft-NMS over a detection file or directory
    stratify        level histogram plus size/depth scatter and model curve CSVs
    depth-error     mean depth error per 10 m bin as CSV
    loss-landscape  angle losses and footprint IoU swept over the angle

CSV column order:

    eval:           class,difficulty,mode,iou,interp,ap,n_gt,n_tp,n_fp
    stratify:       scatter  frame,h2d,z     curve  h2d,z
    depth-error:    bin_lo,bin_hi,n_gt,n_matched,mean_abs_dz
    loss-landscape: heading sweep  theta_deg,naive,second,mds,iou
                    offset sweep   delta_deg,naive,second,mds,iou

All numbers are written with 6 decimals.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .errors import KittiParseError
from .evaluate import Difficulty, classify_difficulty, depth_error_report, evaluate
from .kitti_io import (list_frames, parse_calib_file, parse_detection_file, parse_label_file,
                       write_detection_file)
from .losses import heading_flip_curves, offset_curves
from .nms import NmsParams, pipeline
from .stratify import default_config, fit_curve_points, level_histogram

log = logging.getLogger("stratdet")

DIFFICULTY_NAMES = {Difficulty.EASY: "easy", Difficulty.MODERATE: "moderate", Difficulty.HARD: "hard"}


class CliError(Exception):
    pass


def _f(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "nan"
    s = f"{float(x):.6f}"
    return "0.000000" if s == "-0.000000" else s


def _csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_f(v) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def _emit(text: str, path: Optional[str]):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _frames(directory) -> Dict[str, Path]:
    try:
        return list_frames(directory)
    except FileNotFoundError as exc:
        raise CliError(str(exc)) from None


def _pair(gt: Dict[str, Path], other: Dict[str, Path], what: str) -> List[str]:
    missing = sorted(set(gt) - set(other))
    extra = sorted(set(other) - set(gt))
    if missing:
        log.warning("%d frame(s) without %s, e.g. %s", len(missing), what, missing[0])
    if extra:
        log.warning("%d %s file(s) without ground truth, e.g. %s", len(extra), what, extra[0])
    return sorted(gt)


def _read(path: Path, parser):
    try:
        return parser(path.read_text(), source=str(path))
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}") from None


def _load_pairs(gt_dir, det_dir):
    gt_paths = _frames(gt_dir)
    det_paths = _frames(det_dir)
    keys = _pair(gt_paths, det_paths, "detections")
    gts = {k: _read(gt_paths[k], parse_label_file) for k in keys}
    dets = {k: _read(det_paths[k], parse_detection_file) for k in keys if k in det_paths}
    return gts, dets


def cmd_eval(args) -> int:
    gts, dets = _load_pairs(args.gt_dir, args.det_dir)
    rows = []
    lines = [f"{'class':<12}{'mode':<6}{'iou':>6}  {'AP|R' + str(args.interp):<8}"
             f"{'easy':>10}{'moderate':>10}{'hard':>10}"]
    for cls in args.class_names:
        res = evaluate(gts, dets, cls, args.iou, args.mode, args.interp)
        cells = []
        for d in (Difficulty.EASY, Difficulty.MODERATE, Difficulty.HARD):
            r = res[d]
            cells.append("n/a" if r.ap is None else f"{100.0 * r.ap:.2f}")
            rows.append([cls, DIFFICULTY_NAMES[d], args.mode, float(args.iou), args.interp,
                         "nan" if r.ap is None else float(r.ap), r.n_gt, r.n_tp, r.n_fp])
        lines.append(f"{cls:<12}{args.mode:<6}{args.iou:>6.2f}  {'':<8}" + "".join(f"{c:>10}" for c in cells))
    sys.stdout.write("\n".join(lines) + "\n")
    if args.csv:
        _emit(_csv_text(["class", "difficulty", "mode", "iou", "interp", "ap", "n_gt", "n_tp", "n_fp"], rows),
              args.csv)
    return 0


def cmd_nms(args) -> int:
    params = NmsParams(sigma=args.sigma, gamma=args.gamma, score_floor=args.score_floor)
    src = Path(args.input)
    dst = Path(args.output)
    if src.is_dir():
        dst.mkdir(parents=True, exist_ok=True)
        jobs = [(p, dst / p.name) for p in _frames(src).values()]
    elif src.is_file():
        jobs = [(src, dst)]
    else:
        raise CliError(f"no such file or directory: {src}")
    for inp, out in jobs:
        dets = _read(inp, parse_detection_file)
        out.write_text(write_detection_file(pipeline(dets, params, top_k=args.top_k)))
    return 0


def cmd_stratify(args) -> int:
    label_paths = _frames(args.label_dir)
    calib_paths = _frames(args.calib_dir)
    keys = [k for k in _pair(label_paths, calib_paths, "calibration") if k in calib_paths]
    config = default_config()
    frames, objs, ids = [], [], []
    for k in keys:
        labels = [o for o in _read(label_paths[k], parse_label_file)
                  if o.class_name == args.class_name]
        if args.difficulty != "all":
            limit = {"easy": 0, "moderate": 1, "hard": 2}[args.difficulty]
            labels = [o for o in labels if classify_difficulty(o) <= limit]
        frames.append((labels, _read(calib_paths[k], parse_calib_file)))
        objs.extend(labels)
        ids.extend([k] * sum(1 for o in labels if o.height2d > 0 and o.depth > 0))
    if not objs:
        raise CliError(f"no {args.class_name} objects found")
    hist = level_histogram(objs, config)
    out = ["level,stride,z_min,z_max,count"]
    for lv in config.levels:
        out.append(f"{lv.index},{lv.stride},{_f(lv.z_min)},{_f(lv.z_max)},{hist[lv.index]}")
    out.append(f"none,,,,{hist[None]}")
    fit = fit_curve_points(frames)
    res = fit.relative_residuals()
    out.append(f"# objects={fit.scatter.shape[0]} mean_H={_f(fit.mean_height)} mean_L={_f(fit.mean_length)} "
               f"f_v={_f(fit.focal_v)} median_rel_residual={_f(float(np.median(res)))}")
    sys.stdout.write("\n".join(out) + "\n")
    scatter_rows = [(k, float(h), float(z)) for k, (h, z) in zip(ids, fit.scatter)]
    Path(args.out_prefix + "_scatter.csv").write_text(_csv_text(["frame", "h2d", "z"], scatter_rows))
    Path(args.out_prefix + "_curve.csv").write_text(
        _csv_text(["h2d", "z"], [(float(h), float(z)) for h, z in fit.curve]))
    return 0


def cmd_depth_error(args) -> int:
    gts, dets = _load_pairs(args.gt_dir, args.det_dir)
    rep = depth_error_report(gts, dets, args.iou, args.class_name, args.mode)
    rows = []
    for i in range(rep.counts.size):
        rows.append([float(rep.edges[i]), float(rep.edges[i + 1]), int(rep.per_bin_gt[i]), int(rep.counts[i]),
                     float(rep.mean_abs[i])])
    text = _csv_text(["bin_lo", "bin_hi", "n_gt", "n_matched", "mean_abs_dz"], rows)
    _emit(text, args.out)
    log.info("unmatched=%d out_of_range=%d", rep.unmatched, rep.out_of_range)
    return 0


def cmd_loss_landscape(args) -> int:
    if args.steps < 2:
        raise CliError("--steps must be at least 2")
    if args.sweep == "heading":
        thetas = np.linspace(0.0, 0.5 * math.pi, args.steps)
        c = heading_flip_curves(thetas, args.width, args.length)
        rows = [[float(np.degrees(t)), float(a), float(b), float(m), float(i)]
                for t, a, b, m, i in zip(c["theta"], c["naive"], c["second"], c["mds"], c["iou"])]
        header = ["theta_deg", "naive", "second", "mds", "iou"]
    else:
        deltas = np.linspace(-0.5 * math.pi, 0.5 * math.pi, args.steps)
        c = offset_curves(math.radians(args.theta), deltas, args.width, args.length)
        rows = [[float(np.degrees(t)), float(a), float(b), float(m), float(i)]
                for t, a, b, m, i in zip(c["delta"], c["naive"], c["second"], c["mds"], c["iou"])]
        header = ["delta_deg", "naive", "second", "mds", "iou"]
    _emit(_csv_text(header, rows), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stratdet", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="BEV / 3D average precision")
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--det-dir", required=True)
    p.add_argument("--class", dest="class_names", action="append", default=None,
                   help="class to evaluate; repeatable (default Car)")
    p.add_argument("--iou", type=float, default=0.7)
    p.add_argument("--mode", choices=("bev", "3d"), default="bev")
    p.add_argument("--interp", type=int, choices=(40, 11), default=40)
    p.add_argument("--csv", help="also write class,difficulty,mode,iou,interp,ap,n_gt,n_tp,n_fp here ('-' = stdout)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("nms", help="density soft-NMS over KITTI detection files")
    p.add_argument("input", help="detection file or directory")
    p.add_argument("output", help="output file or directory")
    p.add_argument("--sigma", type=float, default=0.9)
    p.add_argument("--gamma", type=float, default=20.0)
    p.add_argument("--score-floor", type=float, default=0.01)
    p.add_argument("--top-k", type=int, default=None)
    p.set_defaults(func=cmd_nms)

    p = sub.add_parser("stratify", help="level histogram and size/depth scatter + curve CSVs")
    p.add_argument("--label-dir", required=True)
    p.add_argument("--calib-dir", required=True)
    p.add_argument("--class", dest="class_name", default="Car")
    p.add_argument("--difficulty", choices=("easy", "moderate", "hard", "all"), default="hard",
                   help="keep objects up to this difficulty (default hard)")
    p.add_argument("--out-prefix", default="stratify",
                   help="writes PREFIX_scatter.csv (frame,h2d,z) and PREFIX_curve.csv (h2d,z)")
    p.set_defaults(func=cmd_stratify)

    p = sub.add_parser("depth-error", help="mean |dZ| per 10 m depth bin")
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--det-dir", required=True)
    p.add_argument("--class", dest="class_name", default="Car")
    p.add_argument("--iou", type=float, default=0.1, help="minimum IoU for the best detection (default 0.1)")
    p.add_argument("--mode", choices=("bev", "3d"), default="bev")
    p.add_argument("--out", default="-", help="bin_lo,bin_hi,n_gt,n_matched,mean_abs_dz ('-' = stdout)")
    p.set_defaults(func=cmd_depth_error)

    p = sub.add_parser("loss-landscape", help="angle losses and IoU over the angle")
    p.add_argument("--sweep", choices=("heading", "offset"), default="heading",
                   help="heading: wrong heading at each offset; offset: fixed truth, shifted prediction")
    p.add_argument("--theta", type=float, default=45.0, help="true angle in degrees for --sweep offset")
    p.add_argument("--steps", type=int, default=91)
    p.add_argument("--width", type=float, default=1.6)
    p.add_argument("--length", type=float, default=3.9)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_loss_landscape)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    if getattr(args, "class_names", "unset") is None:
        args.class_names = ["Car"]
    try:
        return args.func(args)
    except (CliError, KittiParseError, ValueError) as exc:
        print(f"stratdet {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
