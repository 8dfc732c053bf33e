"""``conformal-box`` command line.

Every command writes into the directory given by ``--out``::

    calibrate          margins_<mode>.json [matches_calibration.json]
    conformalize       conformalized_<mode>.json
    evaluate           report.json, pr_curve_iou<t>.csv
    validate-coverage  monte_carlo_<mode>.json
    render             overlays/<image_id>.svg

Exit codes: 0 success, 2 invalid input, 3 unbounded margins, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .conformal import MarginSet, ScoreMode, UnboundedMarginsError, calibrate, conformalize
from .dataset_io import (
    DatasetFormatError,
    join,
    load_ground_truth,
    load_predictions,
    split,
    to_coco_bbox,
    write_json,
)
from .metrics import coverage, precision_recall_curve
from .pairing import match_dataset
from .render import render_overlay
from .synthetic import GeneratorConfig, monte_carlo_coverage

logger = logging.getLogger("conformal_box")

EXIT_OK, EXIT_INVALID, EXIT_UNBOUNDED, EXIT_IO = 0, 2, 3, 4
DEFAULT_SEED = 0


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INVALID):
        super().__init__(message)
        self.code = code


def _modes(value: str | None, default: str | None = "additive") -> list[ScoreMode]:
    value = value or default
    if value is None:
        return []
    if value == "both":
        return [ScoreMode.ADDITIVE, ScoreMode.MULTIPLICATIVE]
    return [ScoreMode(value)]


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_dataset(args, part: str | None = None):
    if not args.gt or not args.pred:
        raise CliError("--gt and --pred are required")
    gt = load_ground_truth(args.gt, category_id=args.category_id)
    preds = load_predictions(args.pred, gt, score_floor=args.score_floor,
                             category_id=args.category_id)
    dataset = join(gt, preds)
    if args.split and part is not None:
        val, cal, test = split(dataset, tuple(args.split), seed=args.seed)
        dataset = {"validation": val, "calibration": cal, "test": test}[part]
    return dataset


def _load_margins(paths) -> list[MarginSet]:
    out = []
    for p in paths or []:
        try:
            doc = json.loads(Path(p).read_text())
        except json.JSONDecodeError as exc:
            raise CliError(f"{p}: malformed JSON at line {exc.lineno}, column {exc.colno}")
        out.append(MarginSet.from_json(doc))
    return out


def cmd_calibrate(args) -> int:
    dataset = _load_dataset(args, "calibration")
    report = match_dataset(dataset, args.iou_threshold)
    c = report.counts
    logger.info("pairing on %d images: TP=%d FP=%d FN=%d",
                len(dataset), c["tp"], c["fp"], c["fn"])
    if not report.pairs:
        raise CliError("insufficient calibration data: no matched boxes", EXIT_UNBOUNDED)
    out = _out_dir(args)
    if args.dump_matches:
        write_json(report.to_json(), out / "matches_calibration.json")
    for mode in _modes(args.mode):
        margins = calibrate(report.pairs, args.alpha, mode, args.iou_threshold)
        if margins.unbounded:
            raise CliError(
                f"insufficient calibration data: {margins.n_box} boxes cannot give finite "
                f"margins at alpha={args.alpha}; add calibration data or raise --alpha",
                EXIT_UNBOUNDED)
        logger.info("%s margins (n_box=%d): %s", mode.value, margins.n_box,
                    ", ".join(f"{q:.4g}" for q in margins.q))
        write_json(margins.to_json(), out / f"margins_{mode.value}.json")
    return EXIT_OK


def cmd_conformalize(args) -> int:
    margin_sets = _load_margins(args.margins)
    if not margin_sets:
        raise CliError("--margins is required")
    wanted = _modes(args.mode, default=None)
    dataset = _load_dataset(args)
    out = _out_dir(args)
    for margins in margin_sets:
        if wanted and margins.mode not in wanted:
            raise CliError(f"margins are {margins.mode.value} but --mode is {args.mode}")
        if margins.unbounded:
            raise CliError("margins are unbounded", EXIT_UNBOUNDED)
        results = []
        for gt, pred in dataset:
            frame = gt.frame if args.clamp else None
            for box, conf in pred.boxes:
                cbox = conformalize(box, margins, frame)
                results.append({"image_id": gt.image_id, "bbox": to_coco_bbox(cbox), "score": conf})
                if args.category_id is not None:
                    results[-1]["category_id"] = args.category_id
        write_json(results, out / f"conformalized_{margins.mode.value}.json")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    dataset = _load_dataset(args, "test")
    margin_sets = _load_margins(args.margins)
    report = match_dataset(dataset, args.iou_threshold)
    frames = dataset.frames()
    doc = {
        "n_images": len(dataset),
        "pairing": {"iou_threshold": args.iou_threshold, **report.counts},
        "coverage": {"none": coverage(report.pairs).to_json()},
        "coverage_clamped": {"none": coverage(report.pairs, None, frames).to_json()},
        "average_precision": {},
    }
    for margins in margin_sets:
        if margins.unbounded:
            raise CliError("margins are unbounded", EXIT_UNBOUNDED)
        key = margins.mode.value
        doc["coverage"][key] = coverage(report.pairs, margins).to_json()
        doc["coverage_clamped"][key] = coverage(report.pairs, margins, frames).to_json()
    out = _out_dir(args)
    if dataset.n_truths:
        for t in args.ap_iou:
            curve = precision_recall_curve(dataset, t)
            doc["average_precision"][f"{t:g}"] = curve.area()
            curve.to_csv(out / f"pr_curve_iou{t:g}.csv")
    else:
        logger.warning("no ground-truth boxes: AP undefined")
    write_json(doc, out / "report.json")
    return EXIT_OK


def cmd_validate_coverage(args) -> int:
    config = GeneratorConfig()
    if args.config:
        config = GeneratorConfig.from_json(json.loads(Path(args.config).read_text()))
    config = config.with_seed(args.seed)
    out = _out_dir(args)
    for mode in _modes(args.mode):
        mc = monte_carlo_coverage(config, args.alpha, mode, args.repetitions, args.cal_fraction,
                                  args.iou_threshold, resample=args.resample,
                                  clamp=args.clamp, n_jobs=args.jobs)
        logger.info("%s: mean coverage %.4f (std %.4f) over %d repetitions",
                    mode.value, mc.mean_coverage, mc.std_coverage, len(mc.per_rep_coverage))
        write_json(mc.to_json(), out / f"monte_carlo_{mode.value}.json")
    return EXIT_OK


def cmd_render(args) -> int:
    dataset = _load_dataset(args, "test")
    margin_sets = _load_margins(args.margins)
    if len(margin_sets) > 1:
        raise CliError("render takes a single --margins file")
    margins = margin_sets[0] if margin_sets else None
    by_image = {}
    for pair in match_dataset(dataset, args.iou_threshold).pairs:
        by_image.setdefault(pair.image_id, []).append(pair)
    out = _out_dir(args) / "overlays"
    out.mkdir(exist_ok=True)
    for gt, _ in dataset:
        image_path = None
        if args.images:
            image_path = Path(args.images) / (gt.file_name or f"{gt.image_id}.jpg")
        svg = render_overlay(gt, by_image.get(gt.image_id, []), margins, image_path, args.clamp)
        (out / f"{gt.image_id}.svg").write_text(svg)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--gt", help="COCO annotation JSON")
    common.add_argument("--pred", help="COCO results JSON")
    common.add_argument("--margins", nargs="+", help="margins JSON file(s)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--alpha", type=float, default=0.1, help="miscoverage level (default 0.1)")
    common.add_argument("--mode", choices=["additive", "multiplicative", "both"])
    common.add_argument("--iou-threshold", type=float, default=0.5,
                        help="pairing IoU threshold (default 0.5)")
    common.add_argument("--score-floor", type=float, default=0.0,
                        help="drop detections scoring below this")
    common.add_argument("--category-id", type=int, help="keep only this category")
    common.add_argument("--seed", type=int, default=DEFAULT_SEED)
    common.add_argument("--split", type=int, nargs=3, metavar=("N_VAL", "N_CAL", "N_TEST"),
                        help="image-level split, e.g. 300 700 395")
    common.add_argument("--clamp", action="store_true", help="clip boxes to the image frame")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="conformal-box", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", parents=[common], help="compute margins")
    p.add_argument("--dump-matches", action="store_true")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("conformalize", parents=[common], help="apply margins to detections")
    p.set_defaults(func=cmd_conformalize)

    p = sub.add_parser("evaluate", parents=[common], help="coverage, stretch and AP")
    p.add_argument("--ap-iou", type=float, nargs="+", default=[0.3, 0.8])
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("validate-coverage", parents=[common],
                       help="Monte Carlo check of the coverage guarantee")
    p.add_argument("--config", help="generator config JSON")
    p.add_argument("--repetitions", type=int, default=100)
    p.add_argument("--cal-fraction", type=float, default=0.5)
    p.add_argument("--resample", choices=["generate", "resplit"], default="generate")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_validate_coverage)

    p = sub.add_parser("render", parents=[common], help="SVG overlays per image")
    p.add_argument("--images", help="directory holding the raster images")
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if not 0.0 < args.alpha < 1.0:
            raise CliError(f"--alpha must lie in (0, 1), got {args.alpha}")
        return args.func(args)
    except CliError as exc:
        print(f"conformal-box: {exc}", file=sys.stderr)
        return exc.code
    except UnboundedMarginsError as exc:
        print(f"conformal-box: {exc}", file=sys.stderr)
        return EXIT_UNBOUNDED
    except (DatasetFormatError, ValueError, KeyError) as exc:
        print(f"conformal-box: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"conformal-box: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
