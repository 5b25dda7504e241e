"""Grayscale image loading, saving and resampling.

Every image inside the package is a :class:`GrayImage`: a float64 array of
shape ``(height, width)`` holding intensities normalized to ``[0, 1]`` by the
source format's maximum value.  PNG and TIFF go through Pillow; binary PGM
(P5) is handled here so that ``maxval`` is honoured exactly and 16-bit
round-trips are bit-exact.
"""

from __future__ import annotations

import io
import json
import math
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .errors import (
    CorruptImage,
    ImageFileNotFound,
    ImageTooLarge,
    InvalidFactor,
    InvalidImage,
    UnsupportedFormat,
)

PathLike = Union[str, os.PathLike]

_PIL_MAXVAL = {
    "1": 1,
    "L": 255,
    "LA": 255,
    "P": 255,
    "RGB": 255,
    "RGBA": 255,
    "I;16": 65535,
    "I;16B": 65535,
    "I;16L": 65535,
}


@dataclass(frozen=True, eq=False)
class GrayImage:
    """2-D grid of finite real intensities, row-major ``(height, width)``."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels, dtype=np.float64)
        if arr.ndim != 2:
            raise InvalidImage(f"expected a 2-D array, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InvalidImage(f"image must be at least 1x1, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidImage("image contains NaN or Inf")
        if arr is self.pixels:
            arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.pixels, other.pixels))

    def __hash__(self):
        return hash((self.shape, self.pixels.tobytes()))


# ---------------------------------------------------------------------------
# PGM (P5)
# ---------------------------------------------------------------------------

_PGM_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n?)*([0-9]+|P5)")


def _check_size(width: int, height: int, max_pixels: int | None, name: str) -> None:
    if max_pixels is not None and width * height > max_pixels:
        raise ImageTooLarge(f"{name}: {width}x{height} exceeds the {max_pixels}-pixel limit")


def _parse_pgm(data: bytes, path: str, max_pixels: int | None = None) -> GrayImage:
    pos = 0
    fields = []
    for _ in range(4):
        m = _PGM_TOKEN.match(data, pos)
        if m is None:
            raise CorruptImage(f"{path}: malformed PGM header")
        fields.append(m.group(1))
        pos = m.end()
    if fields[0] != b"P5":
        raise UnsupportedFormat(f"{path}: only binary PGM (P5) is supported")
    width, height, maxval = (int(f) for f in fields[1:])
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise CorruptImage(f"{path}: invalid PGM dimensions or maxval")
    _check_size(width, height, max_pixels, path)
    # exactly one whitespace byte separates the header from the raster
    pos += 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    expected = width * height * dtype.itemsize
    raster = data[pos:pos + expected]
    if len(raster) != expected:
        raise CorruptImage(f"{path}: truncated PGM raster ({len(raster)} of {expected} bytes)")
    values = np.frombuffer(raster, dtype=dtype).reshape(height, width)
    return GrayImage(values.astype(np.float64) / maxval)


def _pgm_bytes(img: GrayImage, bit_depth: int) -> bytes:
    maxval = (1 << bit_depth) - 1
    dtype = ">u2" if bit_depth == 16 else "u1"
    q = np.rint(np.clip(img.pixels, 0.0, 1.0) * maxval).astype(dtype)
    header = f"P5\n{img.width} {img.height}\n{maxval}\n".encode("ascii")
    return header + q.tobytes()


# ---------------------------------------------------------------------------
# Pillow-backed formats
# ---------------------------------------------------------------------------

def _from_pil(im, path: str) -> GrayImage:
    mode = im.mode
    if mode == "P":
        im = im.convert("RGB")
        mode = "RGB"
    if mode not in _PIL_MAXVAL:
        raise UnsupportedFormat(f"{path}: unsupported pixel mode {mode!r}")
    arr = np.asarray(im).astype(np.float64)
    if arr.ndim == 3:
        n_color = 1 if mode == "LA" else 3
        # drop alpha; unweighted channel mean
        arr = arr[..., :n_color].sum(axis=2) / n_color
    return GrayImage(arr / _PIL_MAXVAL[mode])


_KNOWN_MAGIC = (b"\x89PNG\r\n\x1a\n", b"II*\x00", b"MM\x00*")


def decode_image(data: bytes, name: str = "<bytes>", max_pixels: int | None = None) -> GrayImage:
    """Decode an in-memory image file (PGM, PNG or TIFF).

    ``max_pixels`` is checked against the header before the raster is decoded.
    """
    if data[:2] in (b"P5", b"P2"):
        return _parse_pgm(data, name, max_pixels)
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(io.BytesIO(data)) as im:
            if im.format not in ("PNG", "TIFF"):
                raise UnsupportedFormat(f"{name}: unsupported format {im.format!r}")
            _check_size(im.width, im.height, max_pixels, name)
            im.load()
            return _from_pil(im, name)
    except UnidentifiedImageError as exc:
        if data.startswith(_KNOWN_MAGIC):
            raise CorruptImage(f"{name}: damaged image data") from exc
        raise UnsupportedFormat(f"{name}: not a recognised image file") from exc
    except (OSError, SyntaxError, ValueError) as exc:
        if isinstance(exc, (UnsupportedFormat, ImageTooLarge)):
            raise
        raise CorruptImage(f"{name}: {exc}") from exc


def load_image(path: PathLike, max_pixels: int | None = None) -> GrayImage:
    """Load an 8/16-bit grayscale (or multi-channel) PGM, PNG or TIFF.

    Intensities are divided by the format's maximum value, so the result lies
    in ``[0, 1]``.  Multi-channel inputs are averaged without weighting.
    """
    path = os.fspath(path)
    if not os.path.isfile(path):
        what = "not a regular file" if os.path.exists(path) else "no such file"
        raise ImageFileNotFound(f"{path}: {what}")
    with open(path, "rb") as fh:
        data = fh.read()
    if not data:
        raise CorruptImage(f"{path}: empty file")
    return decode_image(data, path, max_pixels)


def save_image(img: GrayImage, path: PathLike, bit_depth: int = 16) -> None:
    """Write ``img`` (clipped to [0, 1]) by extension: .pgm, .png, .tif/.tiff."""
    ext = Path(path).suffix.lower()
    fmt = {".pgm": "pgm", ".png": "png", ".tif": "tiff", ".tiff": "tiff"}.get(ext)
    if fmt is None:
        raise UnsupportedFormat(f"{path}: cannot save extension {ext!r}")
    Path(path).write_bytes(encode_image(img, fmt, bit_depth))


def encode_image(img: GrayImage, fmt: str = "pgm", bit_depth: int = 16) -> bytes:
    if bit_depth not in (8, 16):
        raise UnsupportedFormat(f"bit depth must be 8 or 16, got {bit_depth}")
    if fmt == "pgm":
        return _pgm_bytes(img, bit_depth)
    from PIL import Image

    maxval = (1 << bit_depth) - 1
    q = np.rint(np.clip(img.pixels, 0.0, 1.0) * maxval)
    arr = q.astype(np.uint16 if bit_depth == 16 else np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format=fmt.upper())
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Raw intermediate arrays
# ---------------------------------------------------------------------------

def dump_array(arr: np.ndarray, path: PathLike) -> None:
    """Write a 2-D array as little-endian float64 plus a ``.json`` sidecar."""
    arr = np.asarray(arr, dtype="<f8")
    if arr.ndim != 2:
        raise InvalidImage(f"can only dump 2-D arrays, got shape {arr.shape}")
    path = Path(path)
    path.write_bytes(np.ascontiguousarray(arr).tobytes())
    sidecar = path.with_name(path.name + ".json")
    sidecar.write_text(json.dumps({"width": arr.shape[1], "height": arr.shape[0]}))


def load_array(path: PathLike) -> np.ndarray:
    path = Path(path)
    meta = json.loads(path.with_name(path.name + ".json").read_text())
    width, height = int(meta["width"]), int(meta["height"])
    raw = path.read_bytes()
    if len(raw) != width * height * 8:
        raise CorruptImage(f"{path}: size does not match sidecar {width}x{height}")
    return np.frombuffer(raw, dtype="<f8").reshape(height, width).astype(np.float64)


# ---------------------------------------------------------------------------
# Resampling
# ---------------------------------------------------------------------------

def _bilinear_axis(arr: np.ndarray, coords: np.ndarray, axis: int) -> np.ndarray:
    size = arr.shape[axis]
    coords = np.clip(coords, 0.0, size - 1)
    lo = np.floor(coords).astype(np.intp)
    hi = np.minimum(lo + 1, size - 1)
    frac = coords - lo
    a = np.take(arr, lo, axis=axis)
    b = np.take(arr, hi, axis=axis)
    shape = [1, 1]
    shape[axis] = -1
    frac = frac.reshape(shape)
    return a * (1.0 - frac) + b * frac


def resize_bilinear(img: GrayImage, width: int, height: int) -> GrayImage:
    """Bilinear resampling with half-pixel-center alignment and edge clamping."""
    if width < 1 or height < 1:
        raise InvalidFactor(f"target size must be positive, got {width}x{height}")
    sx = img.width / width
    sy = img.height / height
    xs = (np.arange(width) + 0.5) * sx - 0.5
    ys = (np.arange(height) + 0.5) * sy - 0.5
    out = _bilinear_axis(img.pixels, ys, axis=0)
    out = _bilinear_axis(out, xs, axis=1)
    return GrayImage(out)


def downsample(img: GrayImage, factor: int) -> GrayImage:
    """Shrink by an integer factor to ``ceil(w/f) x ceil(h/f)`` with bilinear sampling.

    Output pixel ``j`` samples the input at ``(j + 0.5) * factor - 0.5``.
    """
    if not isinstance(factor, (int, np.integer)) or isinstance(factor, bool):
        raise InvalidFactor(f"factor must be an integer, got {factor!r}")
    if factor < 1 or factor > min(img.width, img.height):
        raise InvalidFactor(
            f"factor must be in [1, {min(img.width, img.height)}], got {factor}"
        )
    if factor == 1:
        return GrayImage(img.pixels.copy())
    width = math.ceil(img.width / factor)
    height = math.ceil(img.height / factor)
    xs = (np.arange(width) + 0.5) * factor - 0.5
    ys = (np.arange(height) + 0.5) * factor - 0.5
    out = _bilinear_axis(img.pixels, ys, axis=0)
    out = _bilinear_axis(out, xs, axis=1)
    return GrayImage(out)
