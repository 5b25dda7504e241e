"""Command line interface.

Exit status: 0 success, 1 error (JSON error document on stderr), 2 image
classified out of focus by a supplied threshold.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .calibrate import (
    BlurSeriesPoint,
    Focus,
    fit_log_linear,
    load_threshold,
    read_series_csv,
    save_threshold,
    threshold_from_fit,
    threshold_to_dict,
    write_series_csv,
)
from .errors import DofError
from .image_io import load_image, save_image
from .preprocess import DEFAULT_SATURATION, StretchParams
from .report import AnalysisConfig, analyze
from .scale_space import DEFAULT_MAX_SCALE, DEFAULT_MIN_SCALE, DEFAULT_NUM_SCALES, ScaleGrid

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_OUT_OF_FOCUS = 2


class _Parser(argparse.ArgumentParser):
    # usage errors must not collide with the out-of-focus exit status
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(json.dumps({"error": {"type": "UsageError", "message": message}}) + "\n")
        sys.exit(EXIT_ERROR)


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _add_detection_flags(p: argparse.ArgumentParser, workers: bool = True) -> None:
    g = p.add_argument_group("detection parameters")
    g.add_argument("--num-scales", type=int, default=DEFAULT_NUM_SCALES, metavar="N")
    g.add_argument("--min-scale", type=float, default=DEFAULT_MIN_SCALE, metavar="T")
    g.add_argument("--max-scale", type=float, default=DEFAULT_MAX_SCALE, metavar="T")
    g.add_argument("--sat-low", type=float, default=DEFAULT_SATURATION, metavar="F",
                   help="fraction of darkest pixels saturated (default %(default)s)")
    g.add_argument("--sat-high", type=float, default=DEFAULT_SATURATION, metavar="F",
                   help="fraction of lightest pixels saturated (default %(default)s)")
    g.add_argument("--min-response", type=float, default=0.0, metavar="R")
    g.add_argument("--downsample", type=int, default=1, metavar="K",
                   help="bilinear downsampling factor applied before detection")
    if workers:
        g.add_argument("--workers", type=int, default=1, metavar="M")


def _config(args) -> AnalysisConfig:
    return AnalysisConfig(
        grid=ScaleGrid(args.num_scales, args.min_scale, args.max_scale),
        stretch=StretchParams(args.sat_low, args.sat_high),
        min_response=args.min_response,
        workers=getattr(args, "workers", 1),
        downsample=args.downsample,
    )


def _emit(doc) -> None:
    sys.stdout.write(json.dumps(doc, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_analyze(args) -> int:
    config = _config(args)
    threshold = None
    if args.threshold_file:
        threshold = load_threshold(args.threshold_file, expected_hash=config.params_hash)
    img = load_image(args.input)
    report = analyze(img, args.input, config, threshold)
    if args.dump_features:
        Path(args.dump_features).write_text(json.dumps(report.features.to_dict(), sort_keys=True))
    _emit(report.to_dict())
    if report.classification is Focus.OUT_OF_FOCUS:
        return EXIT_OUT_OF_FOCUS
    return EXIT_OK


def cmd_calibrate(args) -> int:
    config = _config(args)
    fit = fit_log_linear(read_series_csv(args.series))
    threshold = threshold_from_fit(fit, args.max_deviation, params_hash=config.params_hash)
    save_threshold(threshold, args.out)
    _emit(threshold_to_dict(threshold))
    return EXIT_OK


def cmd_series(args) -> int:
    from .synthetic import gaussian_blur

    config = _config(args)
    img = load_image(args.input)
    points = []
    for sigma in args.sigmas:
        report = analyze(gaussian_blur(img, sigma), f"{args.input}@{sigma}", config)
        points.append(BlurSeriesPoint(sigma, report.count))
    write_series_csv(points, args.out)
    _emit([{"deviation": p.deviation, "count": p.count} for p in points])
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synthetic import gaussian_blur, gen_synthetic

    img = gen_synthetic(args.width, args.height, args.blobs, (args.min_blob, args.max_blob),
                        args.seed, args.placement)
    if args.blur > 0:
        img = gaussian_blur(img, args.blur)
    save_image(img, args.out)
    _emit({"out": args.out, "width": img.width, "height": img.height})
    return EXIT_OK


def cmd_serve(args) -> int:
    from .service import ServiceConfig, serve

    config = _config(args)
    threshold = None
    if args.calibration:
        threshold = load_threshold(args.calibration, expected_hash=config.params_hash)
    serve(
        ServiceConfig(
            root=Path(args.root),
            analysis=config,
            threshold=threshold,
            max_concurrent=args.max_concurrent,
            max_pixels=args.max_pixels,
        ),
        host=args.host,
        port=args.port,
    )
    return EXIT_OK


def cmd_bench(args) -> int:
    from .bench import BenchSpec, run_bench

    spec = BenchSpec(
        resolutions=[(r, r) for r in args.resolutions],
        scale_counts=args.scales,
        worker_counts=args.workers,
        repetitions=args.reps,
        image_source=args.image if args.image else args.seed,
        min_t=args.min_scale,
        max_t=args.max_scale,
    )

    def progress(row):
        print(json.dumps(row.to_dict(), sort_keys=True), file=sys.stderr)

    result = run_bench(spec, progress=progress)
    if args.out:
        result.write_csv(args.out)
        Path(args.out).with_suffix(".json").write_text(result.to_json())
    _emit([r.to_dict() for r in result.rows])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="dogfocus", description="Degree-of-focus scoring by multi-scale DoG feature counts."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="score one image")
    p.add_argument("--input", required=True, metavar="PATH")
    p.add_argument("--threshold-file", metavar="PATH")
    p.add_argument("--dump-features", metavar="PATH")
    _add_detection_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("calibrate", help="fit a deviation,count CSV into a threshold file")
    p.add_argument("--series", required=True, metavar="PATH.csv")
    p.add_argument("--out", required=True, metavar="cal.json")
    p.add_argument("--max-deviation", required=True, type=float, metavar="D")
    _add_detection_flags(p, workers=False)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("series", help="count features under increasing synthetic blur")
    p.add_argument("--input", required=True, metavar="PATH")
    p.add_argument("--sigmas", type=_float_list, default=[0.0, 1.0, 2.0, 4.0, 8.0])
    p.add_argument("--out", required=True, metavar="PATH.csv")
    _add_detection_flags(p)
    p.set_defaults(func=cmd_series)

    p = sub.add_parser("synth", help="write a synthetic blob image")
    p.add_argument("--out", required=True)
    p.add_argument("--width", type=int, default=512)
    p.add_argument("--height", type=int, default=512)
    p.add_argument("--blobs", type=int, default=25)
    p.add_argument("--min-blob", type=float, default=2.0)
    p.add_argument("--max-blob", type=float, default=8.0)
    p.add_argument("--placement", choices=["random", "separated"], default="separated")
    p.add_argument("--blur", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("serve", help="run the HTTP analysis service")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--root", required=True, metavar="DIR")
    p.add_argument("--calibration", metavar="cal.json")
    p.add_argument("--max-concurrent", type=int, default=8, metavar="C")
    p.add_argument("--max-pixels", type=int, default=8192 * 8192, metavar="N")
    _add_detection_flags(p)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("bench", help="median runtime sweeps")
    p.add_argument("--resolutions", type=_int_list, default=[256, 512, 1024])
    p.add_argument("--scales", type=_int_list, default=[8, 16, 32])
    p.add_argument("--workers", type=_int_list, default=[1])
    p.add_argument("--reps", type=int, default=21)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--image", metavar="PATH", help="benchmark a file (resampled) instead of synthetic")
    p.add_argument("--min-scale", type=float, default=DEFAULT_MIN_SCALE)
    p.add_argument("--max-scale", type=float, default=DEFAULT_MAX_SCALE)
    p.add_argument("--out", metavar="bench.csv")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (DofError, OSError, ValueError) as exc:
        sys.stderr.write(
            json.dumps({"error": {"type": type(exc).__name__, "message": str(exc)}}) + "\n"
        )
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
