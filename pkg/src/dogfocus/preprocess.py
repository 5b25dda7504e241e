"""Global histogram stretching with saturated percentile tails."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidStretchParams
from .image_io import GrayImage

DEFAULT_SATURATION = 0.00175


@dataclass(frozen=True)
class StretchParams:
    """Fractions of pixels clipped to black (``lower``) and white (``upper``)."""

    lower_fraction: float = DEFAULT_SATURATION
    upper_fraction: float = DEFAULT_SATURATION

    def __post_init__(self):
        lo, hi = self.lower_fraction, self.upper_fraction
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise InvalidStretchParams("saturation fractions must be finite")
        if lo < 0 or hi < 0 or lo + hi >= 1:
            raise InvalidStretchParams(
                f"need 0 <= lower, 0 <= upper, lower + upper < 1; got {lo}, {hi}"
            )

    def to_dict(self) -> dict:
        return {"lower_fraction": self.lower_fraction, "upper_fraction": self.upper_fraction}


def rank_indices(n_pixels: int, params: StretchParams) -> tuple[int, int]:
    """Nearest-rank positions of the low and high cut in the sorted pixel list."""
    lo = min(max(math.floor(params.lower_fraction * n_pixels), 0), n_pixels - 1)
    hi = n_pixels - 1 - math.floor(params.upper_fraction * n_pixels)
    hi = min(max(hi, 0), n_pixels - 1)
    return lo, hi


def stretch_bounds(pixels: np.ndarray, params: StretchParams) -> tuple[float, float]:
    """Return ``(lo, hi)`` intensity cuts using partial selection, not a full sort."""
    flat = np.asarray(pixels, dtype=np.float64).ravel()
    i_lo, i_hi = rank_indices(flat.size, params)
    part = np.partition(flat, (i_lo, i_hi))
    return float(part[i_lo]), float(part[i_hi])


def histogram_stretch(img: GrayImage, params: StretchParams | None = None) -> GrayImage:
    """Saturate both tails and map ``[lo, hi]`` linearly onto ``[0, 1]``.

    A constant image (``hi == lo``) maps to all zeros.
    """
    params = params or StretchParams()
    lo, hi = stretch_bounds(img.pixels, params)
    if not hi > lo:
        return GrayImage(np.zeros(img.shape))
    with np.errstate(over="ignore"):
        out = (img.pixels - lo) / (hi - lo)
    np.clip(out, 0.0, 1.0, out=out)
    return GrayImage(out)
