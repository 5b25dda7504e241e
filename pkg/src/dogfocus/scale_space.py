"""Gaussian scale space and Difference-of-Gaussians stack.

All smoothing is circular convolution computed in the Fourier domain.  The
forward spectrum of the (stretched) image is computed once and every level
is a pure function of that spectrum and its scale, which is what lets the
executor in :mod:`dogfocus.parallel` farm levels out to workers.

Scales are linearly spaced, ``t_i = min_t + (i - 1) * delta_t`` for
``i = 1 .. n + 1``, and the Gaussian standard deviation at level ``i`` is
``t_i`` itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import fft as sp_fft

from .errors import InsufficientLevels, InvalidScaleGrid, NonPositiveScale, ShapeMismatch
from .image_io import GrayImage

DEFAULT_NUM_SCALES = 16
DEFAULT_MIN_SCALE = 1.0
DEFAULT_MAX_SCALE = 17.0

# Level differences smaller than this many ulps of the peak level value are
# FFT round-off, not structure.  They are set to exactly zero so flat regions
# behave like a constant image and yield no maxima.
ROUNDOFF_ULPS = 4096


@dataclass(frozen=True)
class ScaleGrid:
    n: int = DEFAULT_NUM_SCALES
    min_t: float = DEFAULT_MIN_SCALE
    max_t: float = DEFAULT_MAX_SCALE

    def __post_init__(self):
        if isinstance(self.n, bool) or not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise InvalidScaleGrid(f"n must be a positive integer, got {self.n!r}")
        if not (math.isfinite(self.min_t) and math.isfinite(self.max_t)):
            raise InvalidScaleGrid("scale bounds must be finite")
        if not 0 < self.min_t < self.max_t:
            raise InvalidScaleGrid(
                f"need 0 < min_t < max_t, got min_t={self.min_t}, max_t={self.max_t}"
            )
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "min_t", float(self.min_t))
        object.__setattr__(self, "max_t", float(self.max_t))

    @property
    def delta_t(self) -> float:
        return (self.max_t - self.min_t) / self.n

    @property
    def n_levels(self) -> int:
        return self.n + 1

    @property
    def scales(self) -> tuple[float, ...]:
        dt = self.delta_t
        return tuple(self.min_t + i * dt for i in range(self.n + 1))

    def scale(self, index: int) -> float:
        """Scale ``t_index`` for a 1-based level index."""
        if not 1 <= index <= self.n + 1:
            raise IndexError(f"scale index {index} outside 1..{self.n + 1}")
        return self.min_t + (index - 1) * self.delta_t

    def to_dict(self) -> dict:
        return {"n": self.n, "min_t": self.min_t, "max_t": self.max_t, "delta_t": self.delta_t}


@dataclass(frozen=True, eq=False)
class GaussianPyramid:
    """``levels[k]`` is the image smoothed at ``grid.scales[k]``; shape ``(n+1, H, W)``."""

    levels: np.ndarray
    grid: ScaleGrid

    def __post_init__(self):
        if self.levels.ndim != 3 or self.levels.shape[0] != self.grid.n_levels:
            raise InsufficientLevels(
                f"pyramid needs {self.grid.n_levels} levels, got array of shape {self.levels.shape}"
            )

    @property
    def height(self) -> int:
        return self.levels.shape[1]

    @property
    def width(self) -> int:
        return self.levels.shape[2]


@dataclass(frozen=True, eq=False)
class DoGStack:
    """``planes[i - 1]`` holds DoG level ``i``; shape ``(n, H, W)``."""

    planes: np.ndarray
    grid: ScaleGrid

    def __post_init__(self):
        if self.planes.ndim != 3 or self.planes.shape[0] != self.grid.n:
            raise InsufficientLevels(
                f"DoG stack needs {self.grid.n} planes, got array of shape {self.planes.shape}"
            )

    @property
    def height(self) -> int:
        return self.planes.shape[1]

    @property
    def width(self) -> int:
        return self.planes.shape[2]


def _wrapped_offsets(size: int) -> np.ndarray:
    # signed distance from index 0 under periodic indexing
    k = np.arange(size, dtype=np.float64)
    return np.where(k <= size // 2, k, k - size)


def _axis_profile(size: int, t: float) -> np.ndarray:
    return np.exp(-(_wrapped_offsets(size) ** 2) / (2.0 * t * t))


def _check_kernel_args(t, width, height):
    if not (t > 0 and math.isfinite(t)):
        raise NonPositiveScale(f"scale must be positive and finite, got {t!r}")
    if width < 1 or height < 1:
        raise ShapeMismatch(f"kernel size must be positive, got {width}x{height}")


def gaussian_kernel(t: float, width: int, height: int, normalize: bool = True) -> np.ndarray:
    """Sample ``G(x, y, t)`` on a ``height x width`` periodic grid, peak at ``[0, 0]``.

    With ``normalize=False`` the raw samples of ``exp(-(x²+y²)/2t²) / (2πt²)``
    are returned; otherwise they are rescaled to sum to one.
    """
    _check_kernel_args(t, width, height)
    kernel = np.outer(_axis_profile(height, t), _axis_profile(width, t)) / (2.0 * math.pi * t * t)
    if normalize:
        kernel /= kernel.sum()
    return kernel


def kernel_spectrum(t: float, width: int, height: int) -> np.ndarray:
    """``rfft2(gaussian_kernel(t, width, height))`` computed from the separable factors."""
    _check_kernel_args(t, width, height)
    gx = _axis_profile(width, t)
    gy = _axis_profile(height, t)
    gx /= gx.sum()
    gy /= gy.sum()
    return np.outer(sp_fft.fft(gy, workers=1), sp_fft.rfft(gx, workers=1))


def image_spectrum(pixels: np.ndarray) -> np.ndarray:
    """Real-to-complex forward transform of an image (the shared broadcast input)."""
    return sp_fft.rfft2(np.asarray(pixels, dtype=np.float64), workers=1)


def smooth_from_spectrum(spectrum: np.ndarray, shape: tuple[int, int], t: float) -> np.ndarray:
    """One pyramid level: ``F^-1{F{G_t} * spectrum}``.  Pure; reads ``spectrum`` only."""
    height, width = shape
    kernel_hat = kernel_spectrum(t, width, height)
    kernel_hat *= spectrum
    return sp_fft.irfft2(kernel_hat, s=shape, workers=1)


def fft_convolve(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Circular 2-D convolution of two same-shaped real arrays via the FFT."""
    img = np.asarray(img, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    if img.ndim != 2 or img.shape != kernel.shape:
        raise ShapeMismatch(f"image {img.shape} and kernel {kernel.shape} must match")
    prod = sp_fft.rfft2(img, workers=1) * sp_fft.rfft2(kernel, workers=1)
    return sp_fft.irfft2(prod, s=img.shape, workers=1)


def build_pyramid(img: GrayImage | np.ndarray, grid: ScaleGrid) -> GaussianPyramid:
    """Smooth ``img`` at every scale of ``grid``, reusing one forward spectrum."""
    pixels = img.pixels if isinstance(img, GrayImage) else np.asarray(img, dtype=np.float64)
    spectrum = image_spectrum(pixels)
    levels = np.empty((grid.n_levels,) + pixels.shape)
    for k, t in enumerate(grid.scales):
        levels[k] = smooth_from_spectrum(spectrum, pixels.shape, t)
    return GaussianPyramid(levels, grid)


def roundoff_floor(levels: np.ndarray) -> float:
    """Magnitude below which a level difference is indistinguishable from round-off."""
    peak = float(np.max(np.abs(levels))) if levels.size else 0.0
    return ROUNDOFF_ULPS * np.finfo(np.float64).eps * peak


def build_dog(pyr: GaussianPyramid) -> DoGStack:
    """``DoG_i = t_i * (L_{i+1} - L_i)`` for ``i = 1 .. n``.

    Differences within :func:`roundoff_floor` of zero are flushed to zero.
    """
    levels = pyr.levels
    if levels.shape[0] < 2:
        raise InsufficientLevels("DoG needs at least two pyramid levels")
    t = np.asarray(pyr.grid.scales[:-1]).reshape(-1, 1, 1)
    diff = levels[1:] - levels[:-1]
    diff[np.abs(diff) < roundoff_floor(levels)] = 0.0
    planes = t * diff
    return DoGStack(planes, pyr.grid)
