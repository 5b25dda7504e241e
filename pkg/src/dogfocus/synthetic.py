"""Seeded synthetic test sections: Gaussian blobs on a mid-gray background.

Blobs are dark by default because the detector keeps maxima of the signed
DoG response, and a dark blob's center brightens as blur increases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import InvalidRange
from .image_io import GrayImage

BACKGROUND = 0.5
# blob tails are rendered out to this many standard deviations (exp(-32) ~ 1e-14)
_RENDER_RADIUS = 8.0


@dataclass(frozen=True)
class Blob:
    x: float
    y: float
    scale: float
    amplitude: float


def _check(width, height, blob_count, scale_range):
    if width < 1 or height < 1:
        raise InvalidRange(f"image size must be positive, got {width}x{height}")
    if blob_count < 0:
        raise InvalidRange(f"blob_count must be >= 0, got {blob_count}")
    lo, hi = scale_range
    if not 0 < lo <= hi < min(width, height) / 4:
        raise InvalidRange(
            f"scale_range must satisfy 0 < lo <= hi < {min(width, height) / 4}, got {scale_range}"
        )


def synthetic_blobs(
    width: int,
    height: int,
    blob_count: int,
    scale_range: tuple[float, float],
    seed: int,
    placement: str = "random",
    amplitude_range: tuple[float, float] = (0.15, 0.35),
    polarity: int = -1,
) -> list[Blob]:
    """Draw blob parameters.

    ``placement="random"`` samples centers uniformly over the image.
    ``placement="separated"`` puts one blob per cell of a near-square grid,
    jittered so that every blob keeps ``4 * scale`` pixels from its cell
    edges; raises :class:`InvalidRange` if the cells are too small.
    """
    _check(width, height, blob_count, scale_range)
    rng = np.random.default_rng(seed)
    scales = rng.uniform(scale_range[0], scale_range[1], blob_count)
    amps = polarity * rng.uniform(amplitude_range[0], amplitude_range[1], blob_count)
    if placement == "random":
        xs = rng.uniform(0, width, blob_count)
        ys = rng.uniform(0, height, blob_count)
    elif placement == "separated":
        if blob_count == 0:
            xs = ys = np.empty(0)
        else:
            cols = math.ceil(math.sqrt(blob_count * width / height))
            rows = math.ceil(blob_count / cols)
            cw, ch = width / cols, height / rows
            slack_x = cw / 2 - 4 * scales
            slack_y = ch / 2 - 4 * scales
            if np.any(slack_x < 0) or np.any(slack_y < 0):
                raise InvalidRange(
                    f"{blob_count} blobs of scale up to {scale_range[1]} do not fit "
                    f"apart in {width}x{height}"
                )
            cells = np.arange(blob_count)
            xs = (cells % cols + 0.5) * cw + rng.uniform(-1, 1, blob_count) * slack_x
            ys = (cells // cols + 0.5) * ch + rng.uniform(-1, 1, blob_count) * slack_y
    else:
        raise InvalidRange(f"unknown placement {placement!r}")
    return [Blob(float(x), float(y), float(s), float(a)) for x, y, s, a in zip(xs, ys, scales, amps)]


def render_blobs(
    width: int, height: int, blobs: list[Blob], background: float = BACKGROUND
) -> GrayImage:
    """Sum the blobs onto a constant background and clip to ``[0, 1]``."""
    img = np.full((height, width), float(background))
    for b in blobs:
        r = _RENDER_RADIUS * b.scale
        x0, x1 = max(0, math.floor(b.x - r)), min(width, math.ceil(b.x + r) + 1)
        y0, y1 = max(0, math.floor(b.y - r)), min(height, math.ceil(b.y + r) + 1)
        if x0 >= x1 or y0 >= y1:
            continue
        gx = np.exp(-((np.arange(x0, x1) - b.x) ** 2) / (2 * b.scale ** 2))
        gy = np.exp(-((np.arange(y0, y1) - b.y) ** 2) / (2 * b.scale ** 2))
        img[y0:y1, x0:x1] += b.amplitude * np.outer(gy, gx)
    np.clip(img, 0.0, 1.0, out=img)
    return GrayImage(img)


def gen_synthetic(
    width: int,
    height: int,
    blob_count: int,
    scale_range: tuple[float, float],
    seed: int,
    placement: str = "random",
) -> GrayImage:
    """Deterministic blob image; the same seed always gives the same pixels."""
    blobs = synthetic_blobs(width, height, blob_count, scale_range, seed, placement)
    return render_blobs(width, height, blobs)


def gaussian_blur(img: GrayImage, sigma: float) -> GrayImage:
    """Defocus stand-in; ``sigma == 0`` returns an unchanged copy."""
    if sigma < 0:
        raise InvalidRange(f"blur sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return GrayImage(img.pixels.copy())
    return GrayImage(ndimage.gaussian_filter(img.pixels, sigma, mode="reflect"))
