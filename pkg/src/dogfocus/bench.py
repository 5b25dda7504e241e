"""Runtime sweeps over resolution, scale count and worker count.

Every configuration is run ``k`` times on the same image; the first run is
discarded as warm-up and each phase is summarized by its median over the
remaining ``k - 1`` samples.  Configurations run strictly one after another.
"""

from __future__ import annotations

import csv
import itertools
import json
import logging
import os
import statistics
from dataclasses import dataclass, field

from .errors import DofError, TooManyWorkers
from .image_io import GrayImage, load_image, resize_bilinear
from .parallel import PhaseTimings, run_pipeline
from .preprocess import StretchParams
from .scale_space import DEFAULT_MAX_SCALE, DEFAULT_MIN_SCALE, ScaleGrid
from .synthetic import gen_synthetic

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "width", "height", "num_scales", "workers", "samples", "count",
    "stretch_ms", "pyramid_ms", "gather_ms", "detect_ms", "total_ms",
)


class BenchConfigError(DofError):
    def __init__(self, config: "BenchConfig", cause: BaseException):
        self.config = config
        self.cause = cause
        super().__init__(f"benchmark configuration {config} failed: {cause!r}")


@dataclass(frozen=True)
class BenchConfig:
    width: int
    height: int
    num_scales: int
    workers: int


@dataclass
class BenchSpec:
    resolutions: list[tuple[int, int]]
    scale_counts: list[int]
    worker_counts: list[int] = field(default_factory=lambda: [1])
    repetitions: int = 21
    image_source: str | int = 0
    min_t: float = DEFAULT_MIN_SCALE
    max_t: float = DEFAULT_MAX_SCALE
    stretch: StretchParams = field(default_factory=StretchParams)
    min_response: float = 0.0

    def __post_init__(self):
        if self.repetitions < 2:
            raise ValueError(f"repetitions must be >= 2 (first run is discarded), got {self.repetitions}")
        for n, m in itertools.product(self.scale_counts, self.worker_counts):
            if m < 1 or m > n + 1:
                raise TooManyWorkers(f"{m} workers cannot share {n + 1} pyramid levels")

    def configurations(self) -> list[BenchConfig]:
        return [
            BenchConfig(w, h, n, m)
            for (w, h), n, m in itertools.product(
                self.resolutions, self.scale_counts, self.worker_counts
            )
        ]


@dataclass
class BenchRow:
    config: BenchConfig
    median: PhaseTimings
    samples: list[PhaseTimings]
    counts: list[int]

    @property
    def count(self) -> int:
        return self.counts[0]

    def to_dict(self) -> dict:
        return {
            "width": self.config.width,
            "height": self.config.height,
            "num_scales": self.config.num_scales,
            "workers": self.config.workers,
            "samples": len(self.samples),
            "count": self.count,
            **self.median.to_dict(),
        }


@dataclass
class BenchResult:
    rows: list[BenchRow]

    def row(self, width: int, height: int, num_scales: int, workers: int = 1) -> BenchRow:
        want = BenchConfig(width, height, num_scales, workers)
        for r in self.rows:
            if r.config == want:
                return r
        raise KeyError(want)

    def write_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
            w.writeheader()
            for r in self.rows:
                w.writerow(r.to_dict())

    def to_json(self) -> str:
        doc = [
            {**r.to_dict(), "raw_samples": [s.to_dict() for s in r.samples], "warmup_discarded": 1}
            for r in self.rows
        ]
        return json.dumps(doc, indent=2, sort_keys=True)


def median_timings(samples: list[PhaseTimings]) -> PhaseTimings:
    return PhaseTimings(
        **{name: statistics.median(getattr(s, name) for s in samples) for name in PhaseTimings.PHASES}
    )


def bench_image(source: str | int, width: int, height: int) -> GrayImage:
    """Input for one resolution: a resampled file, or a seeded synthetic section."""
    if isinstance(source, str):
        img = load_image(source)
        if img.shape == (height, width):
            return img
        return resize_bilinear(img, width, height)
    # roughly constant blob density across resolutions
    blobs = max(1, (width * height) // 1024)
    hi = min(8.0, min(width, height) / 4 - 1e-9)
    return gen_synthetic(width, height, blobs, (min(1.5, hi), hi), seed=int(source))


def run_bench(spec: BenchSpec, progress=None) -> BenchResult:
    rows = []
    images: dict[tuple[int, int], GrayImage] = {}
    for cfg in spec.configurations():
        key = (cfg.width, cfg.height)
        if key not in images:
            images[key] = bench_image(spec.image_source, cfg.width, cfg.height)
        img = images[key]
        grid = ScaleGrid(cfg.num_scales, spec.min_t, spec.max_t)
        timings, counts = [], []
        try:
            for _ in range(spec.repetitions):
                features, t = run_pipeline(
                    img, grid, workers=cfg.workers, params=spec.stretch,
                    min_response=spec.min_response,
                )
                timings.append(t)
                counts.append(features.count)
        except Exception as exc:
            raise BenchConfigError(cfg, exc) from exc
        kept = timings[1:]
        row = BenchRow(cfg, median_timings(kept), kept, counts)
        log.info("bench %s: total %.2f ms", cfg, row.median.total_ms)
        if progress is not None:
            progress(row)
        rows.append(row)
    return BenchResult(rows)
