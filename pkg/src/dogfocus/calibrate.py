"""Log-linear calibration of feature count against focal deviation.

A calibration series pairs a focal deviation (microscope units, or a
synthetic blur sigma) with the DOF count measured there.  ``ln(count)`` is
fitted against deviation by ordinary least squares; the fitted line gives
the minimum count an image must reach to be considered in focus.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Iterable

import numpy as np

from .errors import AllCountsZero, CalibrationMismatch, InsufficientData, NonDecreasingFit
from .preprocess import StretchParams
from .scale_space import ScaleGrid

log = logging.getLogger(__name__)


class Focus(str, enum.Enum):
    IN_FOCUS = "InFocus"
    OUT_OF_FOCUS = "OutOfFocus"


@dataclass(frozen=True)
class BlurSeriesPoint:
    deviation: float
    count: int

    def __post_init__(self):
        if not self.deviation >= 0 or not self.count >= 0:
            raise ValueError(f"deviation and count must be >= 0, got {self}")


@dataclass(frozen=True)
class LogLinearFit:
    slope: float
    intercept: float
    r: float

    def predict(self, deviation: float) -> float:
        """Expected feature count at ``deviation``."""
        return math.exp(self.intercept + self.slope * deviation)


@dataclass(frozen=True)
class FocusThreshold:
    min_count: int
    source_fit: LogLinearFit
    max_deviation: float | None = None
    params_hash: str | None = None
    created_at: str | None = None

    def __post_init__(self):
        if self.min_count < 0:
            raise ValueError(f"min_count must be >= 0, got {self.min_count}")


def fit_log_linear(series: Iterable[BlurSeriesPoint]) -> LogLinearFit:
    """OLS fit of ``ln(count) = intercept + slope * deviation``.

    Zero-count points are dropped with a warning.  Needs at least three
    remaining points spanning at least two distinct deviations.
    """
    series = list(series)
    if series and all(p.count == 0 for p in series):
        raise AllCountsZero("every point in the calibration series has count 0")
    kept = [p for p in series if p.count > 0]
    if len(kept) < len(series):
        log.warning("excluding %d zero-count point(s) from the fit", len(series) - len(kept))
    if len(kept) < 3:
        raise InsufficientData(f"need >= 3 points with count > 0, got {len(kept)}")
    x = np.array([p.deviation for p in kept], dtype=np.float64)
    y = np.log(np.array([p.count for p in kept], dtype=np.float64))
    if np.unique(x).size < 2:
        raise InsufficientData("need at least two distinct deviations")
    xm, ym = x.mean(), y.mean()
    dx, dy = x - xm, y - ym
    sxx = float(dx @ dx)
    sxy = float(dx @ dy)
    syy = float(dy @ dy)
    slope = sxy / sxx
    intercept = ym - slope * xm
    # constant counts: no linear association
    r = 0.0 if syy == 0 else sxy / math.sqrt(sxx * syy)
    return LogLinearFit(float(slope), float(intercept), float(min(1.0, max(-1.0, r))))


def threshold_from_fit(
    fit: LogLinearFit, max_acceptable_deviation: float, params_hash: str | None = None
) -> FocusThreshold:
    """``min_count = ceil(exp(intercept + slope * max_acceptable_deviation))``."""
    if not fit.slope < 0:
        raise NonDecreasingFit(
            f"fit slope is {fit.slope}; counts do not fall with focal deviation"
        )
    if max_acceptable_deviation < 0:
        raise ValueError("max_acceptable_deviation must be >= 0")
    min_count = math.ceil(fit.predict(max_acceptable_deviation))
    return FocusThreshold(
        min_count=min_count,
        source_fit=fit,
        max_deviation=float(max_acceptable_deviation),
        params_hash=params_hash,
        created_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
    )


def classify(count: int, threshold: FocusThreshold) -> Focus:
    return Focus.IN_FOCUS if count >= threshold.min_count else Focus.OUT_OF_FOCUS


def params_hash(
    grid: ScaleGrid, stretch: StretchParams, min_response: float = 0.0, downsample: int = 1
) -> str:
    """Stable digest of every parameter that changes what a count means."""
    payload = {
        "grid": {"n": grid.n, "min_t": grid.min_t, "max_t": grid.max_t},
        "stretch": stretch.to_dict(),
        "min_response": float(min_response),
        "downsample": int(downsample),
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def read_series_csv(path: str | os.PathLike) -> list[BlurSeriesPoint]:
    """Read ``deviation,count`` rows; a header row is optional."""
    points = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].strip().startswith("#"):
                continue
            if lineno == 1 and row[0].strip().lower() == "deviation":
                continue
            if len(row) < 2:
                raise InsufficientData(f"{path}:{lineno}: expected 'deviation,count'")
            try:
                points.append(BlurSeriesPoint(float(row[0]), int(float(row[1]))))
            except ValueError as exc:
                raise InsufficientData(f"{path}:{lineno}: {exc}") from exc
    return points


def write_series_csv(points: Iterable[BlurSeriesPoint], path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["deviation", "count"])
        for p in points:
            w.writerow([repr(p.deviation), p.count])


def threshold_to_dict(th: FocusThreshold) -> dict:
    return {
        "slope": th.source_fit.slope,
        "intercept": th.source_fit.intercept,
        "r": th.source_fit.r,
        "min_count": th.min_count,
        "max_deviation": th.max_deviation,
        "created_at": th.created_at,
        "params_hash": th.params_hash,
    }


def save_threshold(th: FocusThreshold, path: str | os.PathLike) -> None:
    with open(path, "w") as fh:
        json.dump(threshold_to_dict(th), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_threshold(path: str | os.PathLike, expected_hash: str | None = None) -> FocusThreshold:
    """Load a threshold file; if ``expected_hash`` is given it must match the file's."""
    with open(path) as fh:
        d = json.load(fh)
    try:
        fit = LogLinearFit(float(d["slope"]), float(d["intercept"]), float(d["r"]))
        th = FocusThreshold(
            min_count=int(d["min_count"]),
            source_fit=fit,
            max_deviation=d.get("max_deviation"),
            params_hash=d.get("params_hash"),
            created_at=d.get("created_at"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InsufficientData(f"{path}: malformed threshold file ({exc})") from exc
    if expected_hash is not None and th.params_hash not in (None, expected_hash):
        raise CalibrationMismatch(
            f"{path}: calibrated with params {th.params_hash}, current params are {expected_hash}"
        )
    return th

