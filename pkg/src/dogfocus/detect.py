"""Feature extraction from a DoG stack.

Each pixel first takes its strongest response across scale (global argmax,
smallest index on ties).  The collapsed plane is then searched for strict
3x3 spatial maxima, which doubles as non-maximum suppression.  The number
of surviving features is the degree-of-focus score.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import EmptyStack, InvalidNeighborhood
from .scale_space import DoGStack, ScaleGrid


@dataclass(frozen=True)
class Feature:
    x: int
    y: int
    scale_index: int
    t: float
    response: float
    border_affected: bool

    def to_dict(self) -> dict:
        return {
            "x": self.x,
            "y": self.y,
            "scale_index": self.scale_index,
            "t": self.t,
            "response": self.response,
            "border_affected": self.border_affected,
        }


@dataclass(frozen=True)
class FeatureSet:
    """Detected maxima in row-major order; ``count`` is the DOF score."""

    features: tuple[Feature, ...]

    @property
    def count(self) -> int:
        return len(self.features)

    def positions(self) -> set[tuple[int, int]]:
        return {(f.x, f.y) for f in self.features}

    def strongest(self, k: int) -> list[Feature]:
        return sorted(self.features, key=lambda f: (-f.response, f.y, f.x))[:k]

    def to_dict(self) -> dict:
        return {"count": self.count, "features": [f.to_dict() for f in self.features]}


def _blocks(size: int, parts: int) -> list[tuple[int, int]]:
    parts = max(1, min(parts, size))
    edges = np.linspace(0, size, parts + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _run_blocks(fn, blocks, workers: int):
    if workers <= 1 or len(blocks) == 1:
        return [fn(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, blocks))


def scale_argmax(stack: DoGStack | np.ndarray, workers: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel maximum over scale and its 1-based index (smallest on ties).

    With ``workers > 1`` the reduction runs over column blocks in parallel;
    the result does not depend on the block count.
    """
    planes = stack.planes if isinstance(stack, DoGStack) else np.asarray(stack)
    if planes.ndim != 3 or planes.shape[0] == 0:
        raise EmptyStack("scale_argmax needs a non-empty (n, H, W) stack")
    width = planes.shape[2]
    values = np.empty(planes.shape[1:], dtype=planes.dtype)
    index = np.empty(planes.shape[1:], dtype=np.int64)

    def reduce_cols(block):
        a, b = block
        sub = planes[:, :, a:b]
        idx = np.argmax(sub, axis=0)
        index[:, a:b] = idx + 1
        values[:, a:b] = np.take_along_axis(sub, idx[None], axis=0)[0]

    _run_blocks(reduce_cols, _blocks(width, workers), workers)
    return values, index


def _strict_maxima_mask(plane: np.ndarray, neighborhood: int) -> np.ndarray:
    footprint = np.ones((neighborhood, neighborhood), dtype=bool)
    footprint[neighborhood // 2, neighborhood // 2] = False
    # out-of-image neighbours are -inf, i.e. the window is truncated at borders
    neighbour_max = ndimage.maximum_filter(
        plane, footprint=footprint, mode="constant", cval=-np.inf
    )
    return plane > neighbour_max


def _check_neighborhood(neighborhood) -> None:
    if (
        isinstance(neighborhood, bool)
        or not isinstance(neighborhood, (int, np.integer))
        or neighborhood < 3
        or neighborhood % 2 == 0
    ):
        raise InvalidNeighborhood(f"neighborhood must be an odd integer >= 3, got {neighborhood!r}")


def maxima_coordinates(
    plane: np.ndarray, neighborhood: int = 3, workers: int = 1
) -> tuple[np.ndarray, np.ndarray]:
    """Row-major ``(ys, xs)`` arrays of strict local maxima; see :func:`local_maxima`."""
    _check_neighborhood(neighborhood)
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim != 2:
        raise InvalidNeighborhood(f"expected a 2-D plane, got shape {plane.shape}")
    if plane.size == 1:
        empty = np.empty(0, dtype=np.intp)
        return empty, empty
    height = plane.shape[0]
    halo = neighborhood // 2

    def band(block):
        a, b = block
        lo, hi = max(0, a - halo), min(height, b + halo)
        mask = _strict_maxima_mask(plane[lo:hi], neighborhood)
        ys, xs = np.nonzero(mask[a - lo:b - lo])
        return ys + a, xs

    parts = _run_blocks(band, _blocks(height, workers), workers)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def local_maxima(
    plane: np.ndarray, neighborhood: int = 3, workers: int = 1
) -> list[tuple[int, int]]:
    """Pixels strictly greater than every other pixel in their window, as ``(x, y)``.

    Borders use the truncated window.  A pixel with no neighbours at all
    (a 1x1 plane) is not reported.  Parallel execution splits rows into
    bands with a halo of ``neighborhood // 2`` rows.
    """
    ys, xs = maxima_coordinates(plane, neighborhood, workers)
    return list(zip(xs.tolist(), ys.tolist()))


def border_margin(grid: ScaleGrid) -> int:
    return math.ceil(grid.max_t)


def assemble_features(
    values: np.ndarray,
    index: np.ndarray,
    ys: np.ndarray,
    xs: np.ndarray,
    grid: ScaleGrid,
    min_response: float = 0.0,
) -> FeatureSet:
    """Build the FeatureSet for maxima at ``(ys, xs)``, keeping ``response >= min_response``."""
    height, width = values.shape
    ys = np.asarray(ys, dtype=np.intp)
    xs = np.asarray(xs, dtype=np.intp)
    responses = values[ys, xs]
    keep = responses >= min_response
    ys, xs, responses = ys[keep], xs[keep], responses[keep]
    indices = index[ys, xs]
    margin = border_margin(grid)
    border = (xs < margin) | (ys < margin) | (xs >= width - margin) | (ys >= height - margin)
    scales = grid.min_t + (indices - 1) * grid.delta_t
    features = tuple(
        Feature(x, y, i, t, r, b)
        for x, y, i, t, r, b in zip(
            xs.tolist(), ys.tolist(), indices.tolist(), scales.tolist(),
            responses.tolist(), border.tolist(),
        )
    )
    return FeatureSet(features)


def detect_features(
    stack: DoGStack, min_response: float = 0.0, neighborhood: int = 3, workers: int = 1
) -> FeatureSet:
    """Scale argmax followed by strict spatial maxima; drops responses below ``min_response``."""
    if not min_response >= 0:
        raise ValueError(f"min_response must be >= 0, got {min_response!r}")
    values, index = scale_argmax(stack, workers=workers)
    ys, xs = maxima_coordinates(values, neighborhood=neighborhood, workers=workers)
    return assemble_features(values, index, ys, xs, stack.grid, min_response)
