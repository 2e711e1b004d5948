"""
Command-line entry point: ``defect-analytics <subcommand> ...``.

Exit codes: 0 on success, 1 on a pipeline or I/O failure, 2 on a usage error.
"""
import argparse
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from pydantic import ValidationError

from imaging.segmentation import SegmentParams
from models.locate import LocateParams
from pipeline import DefectAnalyticsApp
from preprocessing.noise import build_noise_model
from tracking.linking import LinkParams
from utils.config import RunConfig, get_settings
from utils.exceptions import DefectAnalyticsError
from utils.logger import SingletonLogger

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


def parse_grid(text: str) -> List[float]:
    """``start:stop:step`` -> inclusive grid, e.g. ``0.05:0.95:0.05`` -> 19 cutoffs."""
    try:
        start, stop, step = (float(part) for part in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected start:stop:step, got '{text}'") from None
    if step <= 0 or stop < start:
        raise argparse.ArgumentTypeError(f"grid '{text}' needs step > 0 and stop >= start")
    count = int(round((stop - start) / step)) + 1
    return [round(start + i * step, 10) for i in range(count)]


def parse_bins(text: str) -> Tuple[float, float, int]:
    try:
        lo, hi, bins = text.split(":")
        parsed = float(lo), float(hi), int(bins)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi:bins, got '{text}'") from None
    if parsed[2] < 1 or parsed[1] <= parsed[0]:
        raise argparse.ArgumentTypeError(f"bins '{text}' needs hi > lo and at least one bin")
    return parsed


def parse_roi(text: str) -> Tuple[Tuple[float, float], Tuple[float, float]]:
    """``x0:x1,y0:y1`` -> ((x0, x1), (y0, y1))."""
    try:
        x_part, y_part = text.split(",")
        x0, x1 = (float(v) for v in x_part.split(":"))
        y0, y1 = (float(v) for v in y_part.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected x0:x1,y0:y1, got '{text}'") from None
    if x0 > x1 or y0 > y1:
        raise argparse.ArgumentTypeError(f"ROI '{text}' has an inverted range")
    return (x0, x1), (y0, y1)


def parse_window(text: str) -> Tuple[int, int]:
    try:
        first, last = (int(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected first:last, got '{text}'") from None
    if first > last:
        raise argparse.ArgumentTypeError(f"frame window '{text}' is empty")
    return first, last


def parse_params(items: Sequence[str]) -> Dict[str, float]:
    params = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep:
            raise argparse.ArgumentTypeError(f"expected key=value, got '{item}'")
        try:
            params[key.strip()] = float(value)
        except ValueError:
            raise argparse.ArgumentTypeError(f"parameter '{key}' needs a number, got '{value}'") from None
    return params


def build_parser() -> argparse.ArgumentParser:
    settings = get_settings()
    parser = argparse.ArgumentParser(prog="defect-analytics", description="Defect video analytics pipeline")
    parser.add_argument("--config", type=Path, default=None, help="Calibration JSON (default: $DEFECT_CONFIG_PATH)")
    parser.add_argument("--threads", type=int, default=settings.threads, help="Worker threads for frame-parallel stages")
    parser.add_argument("--seed", type=int, default=0, help="Random seed")
    parser.add_argument("--output-dir", type=Path, default=Path("output"), help="Directory for output files")
    parser.add_argument("--log-level", default=settings.log_level, help="Logging level")
    parser.add_argument("--report-format", choices=["csv", "json"], default="csv", help="Format of tabular reports")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    evaluate = sub.add_parser("evaluate", help="Score detections against ground truth")
    evaluate.add_argument("predictions", type=Path)
    evaluate.add_argument("truths", type=Path)
    evaluate.add_argument("--cutoffs", type=parse_grid, default=parse_grid("0.05:0.95:0.05"))
    evaluate.add_argument("--nms-iou", type=float, default=None)

    segment = sub.add_parser("segment", help="Size detections by watershed segmentation and ellipse fit")
    segment.add_argument("frames_dir", type=Path)
    segment.add_argument("detections", type=Path)
    segment.add_argument("--pad", type=int, default=4)
    segment.add_argument("--surface", choices=["intensity", "gradient"], default="intensity")

    track = sub.add_parser("track", help="Link observations into trajectories")
    track.add_argument("observations", type=Path)
    track.add_argument("--search-range", type=float, default=10.0)
    track.add_argument("--memory", type=int, default=3)
    track.add_argument("--max-subnet", type=int, default=12)
    track.add_argument("--drift-correct", action="store_true")

    analyze = sub.add_parser("analyze", help="Frame statistics, growth curves and D_eff histogram")
    analyze.add_argument("trajectories", type=Path)
    analyze.add_argument("--roi", type=parse_roi, default=None)
    analyze.add_argument("--bins", type=parse_bins, default=(2.0, 18.0, 50))
    analyze.add_argument("--frames", type=parse_window, default=None)
    analyze.add_argument("--lag", type=int, default=1)

    noise = sub.add_parser("noise", help="Write a noise-corrupted copy of a frame directory")
    noise.add_argument("frames_dir", type=Path)
    noise.add_argument("--model", choices=["gaussian", "saltpepper", "poisson"], required=True)
    noise.add_argument("--params", nargs="*", default=[], metavar="KEY=VALUE")

    locate = sub.add_parser("locate", help="Detect defects with the baseline locator")
    locate.add_argument("frames_dir", type=Path)
    locate.add_argument("--diameter", type=int, default=9)
    locate.add_argument("--noise-scale", type=float, default=1.0)
    locate.add_argument("--percentile", type=float, default=64.0)

    convert = sub.add_parser("convert-labels", help="Convert plain or ImageJ box CSVs to ground truth")
    convert.add_argument("source", type=Path)
    return parser


def _inputs(args: argparse.Namespace) -> List[Path]:
    names = ("predictions", "truths", "frames_dir", "detections", "observations", "trajectories", "source")
    return [getattr(args, n) for n in names if getattr(args, n, None) is not None]


def run(app: DefectAnalyticsApp, args: argparse.Namespace, stage_params: object) -> None:
    if args.subcommand == "evaluate":
        app.evaluate(args.predictions, args.truths, args.cutoffs, args.nms_iou)
    elif args.subcommand == "segment":
        app.segment(args.frames_dir, args.detections, stage_params)
    elif args.subcommand == "track":
        app.track(args.observations, stage_params, drift_correct=args.drift_correct)
    elif args.subcommand == "analyze":
        app.analyze(args.trajectories, roi=args.roi, bins=args.bins, window=args.frames, lag=args.lag)
    elif args.subcommand == "noise":
        app.noise(args.frames_dir, args.model, stage_params)
    elif args.subcommand == "locate":
        app.locate(args.frames_dir, stage_params)
    elif args.subcommand == "convert-labels":
        app.convert_labels(args.source)


def _stage_params(args: argparse.Namespace, dark_foreground: bool) -> object:
    """Validated parameter record of the chosen subcommand; raises ValueError on bad values."""
    if args.subcommand == "segment":
        return SegmentParams(pad_px=args.pad, surface=args.surface, dark_foreground=dark_foreground)
    if args.subcommand == "track":
        return LinkParams(search_range_px=args.search_range, memory_frames=args.memory, max_subnet_size=args.max_subnet)
    if args.subcommand == "locate":
        return LocateParams(feature_diameter_px=args.diameter, noise_scale_px=args.noise_scale,
                            intensity_percentile=args.percentile)
    if args.subcommand == "noise":
        params = parse_params(args.params)
        build_noise_model(args.model, params)
        return params
    if args.subcommand == "analyze" and args.lag < 1:
        raise ValueError(f"--lag must be >= 1, got {args.lag}")
    if args.subcommand == "evaluate" and args.nms_iou is not None and not 0.0 <= args.nms_iou <= 1.0:
        raise ValueError(f"--nms-iou must be in [0, 1], got {args.nms_iou}")
    return None


def main(argv: Optional[Sequence[str]] = None) -> int:
    settings = get_settings()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE

    SingletonLogger.configure(level=args.log_level, log_to_file=settings.log_to_file, log_dir=settings.log_dir)
    logger = SingletonLogger.getInstance("DefectAnalyticsCLI").logger

    try:
        stage_params = _stage_params(args, settings.dark_foreground)
        config = RunConfig(
            subcommand=args.subcommand,
            calibration_path=args.config,
            input_paths=_inputs(args),
            output_dir=args.output_dir,
            seed=args.seed,
            threads=args.threads,
        )
    except (ValidationError, ValueError, argparse.ArgumentTypeError) as exc:
        logger.error(f"❌ Invalid arguments: {exc}")
        return EXIT_USAGE

    try:
        run(DefectAnalyticsApp(settings, config, report_format=args.report_format), args, stage_params)
    except (DefectAnalyticsError, OSError, ValueError) as exc:
        logger.error(f"❌ {args.subcommand} failed: {exc}")
        return EXIT_FAILURE

    logger.info(f"✅ {args.subcommand} finished; outputs in {config.output_dir}")
    return EXIT_OK


def cli() -> None:
    sys.exit(main())


if __name__ == "__main__":
    cli()
