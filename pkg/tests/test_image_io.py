import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from dogfocus.errors import (
    CorruptImage,
    ImageFileNotFound,
    ImageTooLarge,
    InvalidFactor,
    InvalidImage,
    UnsupportedFormat,
)
from dogfocus.image_io import (
    GrayImage,
    decode_image,
    downsample,
    dump_array,
    encode_image,
    load_array,
    load_image,
    resize_bilinear,
    save_image,
)
from oracles import bilinear_scalar


def test_pgm_8bit_scaling(tmp_path):
    p = tmp_path / "a.pgm"
    p.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 255, 128, 64]))
    img = load_image(p)
    assert (img.width, img.height) == (2, 2)
    np.testing.assert_array_equal(img.pixels.ravel(), [0.0, 1.0, 128 / 255, 64 / 255])


def test_pgm_header_comments_and_16bit(tmp_path):
    raster = np.array([0, 65535, 1, 300], dtype=">u2").tobytes()
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5 # comment\n2\n# another\n2 65535\n" + raster)
    img = load_image(p)
    assert img.pixels[0, 1] == 1.0
    assert img.pixels[1, 1] == 300 / 65535


def test_png_16bit_max_maps_to_one(tmp_path):
    arr = np.array([[0, 65535], [1000, 256]], dtype=np.uint16)
    Image.fromarray(arr).save(tmp_path / "a.png")
    img = load_image(tmp_path / "a.png")
    assert img.pixels[0, 1] == 1.0
    assert img.pixels[1, 0] == 1000 / 65535


def test_tiff_8_and_16_bit(tmp_path):
    a8 = np.array([[0, 51], [102, 255]], dtype=np.uint8)
    Image.fromarray(a8).save(tmp_path / "a.tif")
    np.testing.assert_array_equal(load_image(tmp_path / "a.tif").pixels, a8 / 255)
    a16 = np.array([[7, 65535]], dtype=np.uint16)
    Image.fromarray(a16).save(tmp_path / "b.tiff")
    np.testing.assert_array_equal(load_image(tmp_path / "b.tiff").pixels, a16 / 65535)


def test_rgb_png_channel_average(tmp_path):
    arr = np.zeros((1, 2, 3), dtype=np.uint8)
    arr[0, 0] = (30, 60, 90)
    arr[0, 1] = (255, 255, 255)
    Image.fromarray(arr, mode="RGB").save(tmp_path / "rgb.png")
    img = load_image(tmp_path / "rgb.png")
    # (30 + 60 + 90) / (3 * 255) = 180 / 765
    assert img.pixels[0, 0] == pytest.approx(0.23529411764705882, abs=1e-15)
    assert img.pixels[0, 1] == 1.0


def test_load_is_deterministic(tmp_path):
    arr = np.random.default_rng(1).integers(0, 256, (9, 7), dtype=np.uint8)
    Image.fromarray(arr).save(tmp_path / "x.png")
    assert load_image(tmp_path / "x.png") == load_image(tmp_path / "x.png")


def test_missing_file_names_path(tmp_path):
    with pytest.raises(ImageFileNotFound, match="nope.png"):
        load_image(tmp_path / "nope.png")


def test_unsupported_and_corrupt(tmp_path):
    (tmp_path / "a.txt").write_text("hello world")
    with pytest.raises(UnsupportedFormat, match="a.txt"):
        load_image(tmp_path / "a.txt")
    Image.fromarray(np.zeros((4, 4), np.uint8)).save(tmp_path / "a.jpg")
    with pytest.raises(UnsupportedFormat):
        load_image(tmp_path / "a.jpg")
    (tmp_path / "t.pgm").write_bytes(b"P5\n4 4\n255\n" + bytes(5))
    with pytest.raises(CorruptImage, match="truncated"):
        load_image(tmp_path / "t.pgm")
    good = encode_image(GrayImage(np.zeros((8, 8))), "png")
    (tmp_path / "bad.png").write_bytes(good[: len(good) // 2])
    with pytest.raises(CorruptImage, match="bad.png"):
        load_image(tmp_path / "bad.png")


def test_max_pixels_checked_from_header():
    data = encode_image(GrayImage(np.zeros((10, 10))), "pgm")
    with pytest.raises(ImageTooLarge):
        decode_image(data, max_pixels=99)
    data = encode_image(GrayImage(np.zeros((10, 10))), "png")
    with pytest.raises(ImageTooLarge):
        decode_image(data, max_pixels=99)
    assert decode_image(data, max_pixels=100).shape == (10, 10)


def test_gray_image_invariants():
    with pytest.raises(InvalidImage):
        GrayImage(np.array([[np.nan]]))
    with pytest.raises(InvalidImage):
        GrayImage(np.zeros((0, 3)))
    with pytest.raises(InvalidImage):
        GrayImage(np.zeros(5))
    img = GrayImage(np.zeros((3, 4)))
    assert img.pixels.size == img.width * img.height
    with pytest.raises(ValueError):
        img.pixels[0, 0] = 1.0


@settings(max_examples=40, deadline=None)
@given(arrays(np.uint16, st.tuples(st.integers(1, 12), st.integers(1, 12))))
def test_pgm16_round_trip_bit_exact(tmp_path_factory, raw):
    path = tmp_path_factory.mktemp("rt") / "x.pgm"
    img = GrayImage(raw / 65535.0)
    save_image(img, path)
    once = load_image(path)
    save_image(once, path)
    twice = load_image(path)
    assert once == img
    assert twice == once


@pytest.mark.parametrize("ext", [".png", ".tif"])
def test_png_tiff_16bit_round_trip(tmp_path, ext):
    raw = np.random.default_rng(3).integers(0, 65536, (6, 5)).astype(np.uint16)
    img = GrayImage(raw / 65535.0)
    save_image(img, tmp_path / f"x{ext}")
    assert load_image(tmp_path / f"x{ext}") == img


def test_raw_dump_round_trip(tmp_path, rng):
    arr = rng.normal(size=(5, 7))
    dump_array(arr, tmp_path / "plane.f64")
    meta = json.loads((tmp_path / "plane.f64.json").read_text())
    assert meta == {"width": 7, "height": 5}
    assert (tmp_path / "plane.f64").read_bytes() == arr.astype("<f8").tobytes()
    np.testing.assert_array_equal(load_array(tmp_path / "plane.f64"), arr)


# -- downsample -------------------------------------------------------------

def test_downsample_factor_one_is_identity_copy(rng):
    img = GrayImage(rng.random((7, 5)))
    out = downsample(img, 1)
    assert out == img
    assert out.pixels is not img.pixels


def test_downsample_constant():
    out = downsample(GrayImage(np.full((4, 4), 0.5)), 2)
    np.testing.assert_array_equal(out.pixels, np.full((2, 2), 0.5))


def test_downsample_ramp_matches_scalar_oracle():
    ramp = (4 * np.arange(4)[:, None] + np.arange(4)[None, :]) / 15.0
    out = downsample(GrayImage(ramp), 2)
    # samples land at source coords (0.5, 2.5) on each axis
    np.testing.assert_allclose(out.pixels, np.array([[2.5, 4.5], [10.5, 12.5]]) / 15.0, atol=1e-15)
    np.testing.assert_allclose(out.pixels, bilinear_scalar(ramp, 2), atol=1e-15)


@pytest.mark.parametrize("shape,factor", [((9, 7), 2), ((10, 10), 3), ((5, 17), 4), ((6, 6), 6)])
def test_downsample_shape_and_oracle(rng, shape, factor):
    a = rng.random(shape)
    out = downsample(GrayImage(a), factor)
    assert out.shape == (-(-shape[0] // factor), -(-shape[1] // factor))
    np.testing.assert_allclose(out.pixels, bilinear_scalar(a, factor), atol=1e-14)


@settings(max_examples=60, deadline=None)
@given(
    arrays(np.float64, st.tuples(st.integers(1, 16), st.integers(1, 16)),
           elements=st.floats(-5, 5, allow_nan=False)),
    st.integers(1, 4),
)
def test_downsample_preserves_range(a, factor):
    factor = min(factor, min(a.shape))
    out = downsample(GrayImage(a), factor).pixels
    assert out.min() >= a.min() - 1e-12
    assert out.max() <= a.max() + 1e-12


def test_downsample_rejects_bad_factor():
    img = GrayImage(np.zeros((4, 6)))
    for f in (0, -1, 5, 2.0):
        with pytest.raises(InvalidFactor):
            downsample(img, f)


def test_resize_bilinear_identity_size(rng):
    img = GrayImage(rng.random((6, 9)))
    np.testing.assert_array_equal(resize_bilinear(img, 9, 6).pixels, img.pixels)
