"""Analysis entry point shared by the CLI and the HTTP service."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

from .calibrate import Focus, FocusThreshold, classify, params_hash
from .detect import FeatureSet
from .image_io import GrayImage, downsample
from .parallel import PhaseTimings, run_pipeline
from .preprocess import StretchParams
from .scale_space import ScaleGrid


@dataclass(frozen=True)
class AnalysisConfig:
    grid: ScaleGrid = field(default_factory=ScaleGrid)
    stretch: StretchParams = field(default_factory=StretchParams)
    min_response: float = 0.0
    workers: int = 1
    downsample: int = 1

    def __post_init__(self):
        if not self.min_response >= 0:
            raise ValueError(f"min_response must be >= 0, got {self.min_response}")
        if self.downsample < 1:
            raise ValueError(f"downsample factor must be >= 1, got {self.downsample}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")

    @property
    def params_hash(self) -> str:
        return params_hash(self.grid, self.stretch, self.min_response, self.downsample)


@dataclass
class DofReport:
    image_id: str
    count: int
    grid: ScaleGrid
    stretch: StretchParams
    min_response: float
    workers: int
    downsample: int
    timings: PhaseTimings
    classification: Focus | None = None
    min_count: int | None = None
    service_overhead_ms: float | None = None
    features: FeatureSet | None = field(default=None, repr=False)

    def to_dict(self) -> dict[str, Any]:
        return {
            "image_id": self.image_id,
            "count": self.count,
            "classification": self.classification.value if self.classification else None,
            "min_count": self.min_count,
            "grid": self.grid.to_dict(),
            "stretch": self.stretch.to_dict(),
            "min_response": self.min_response,
            "workers": self.workers,
            "downsample": self.downsample,
            "timings": self.timings.to_dict(),
            "service_overhead_ms": self.service_overhead_ms,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def report_from_dict(d: dict[str, Any]) -> DofReport:
    """Inverse of :meth:`DofReport.to_dict` (features are not serialized)."""
    g = d["grid"]
    s = d["stretch"]
    return DofReport(
        image_id=d["image_id"],
        count=int(d["count"]),
        grid=ScaleGrid(int(g["n"]), float(g["min_t"]), float(g["max_t"])),
        stretch=StretchParams(float(s["lower_fraction"]), float(s["upper_fraction"])),
        min_response=float(d["min_response"]),
        workers=int(d["workers"]),
        downsample=int(d["downsample"]),
        timings=PhaseTimings(**{k: float(d["timings"][k]) for k in PhaseTimings.PHASES}),
        classification=Focus(d["classification"]) if d.get("classification") else None,
        min_count=d.get("min_count"),
        service_overhead_ms=d.get("service_overhead_ms"),
    )


def analyze(
    img: GrayImage,
    image_id: str,
    config: AnalysisConfig | None = None,
    threshold: FocusThreshold | None = None,
    executor=None,
) -> DofReport:
    config = config or AnalysisConfig()
    if config.downsample > 1:
        img = downsample(img, config.downsample)
    workers = min(config.workers, config.grid.n_levels)
    features, timings = run_pipeline(
        img,
        config.grid,
        workers=workers,
        params=config.stretch,
        min_response=config.min_response,
        executor=executor,
    )
    classification = classify(features.count, threshold) if threshold is not None else None
    return DofReport(
        image_id=image_id,
        count=features.count,
        grid=config.grid,
        stretch=config.stretch,
        min_response=config.min_response,
        workers=workers,
        downsample=config.downsample,
        timings=timings,
        classification=classification,
        min_count=threshold.min_count if threshold is not None else None,
        features=features,
    )
