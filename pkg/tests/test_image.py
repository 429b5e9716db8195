import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from qmap.errors import DecodeError, DomainError, FormatError, ShapeError, SizeError
from qmap.image import (
    as_image,
    crop_border,
    extract_patches,
    hflip,
    load_image,
    save_image,
    stitch,
    to_luminance,
    to_uint8,
    window_starts,
)


def test_as_image_promotes_planes_and_rejects_bad_channels():
    assert as_image(np.zeros((4, 5))).shape == (4, 5, 1)
    with pytest.raises(ShapeError):
        as_image(np.zeros((4, 5, 2)))


def test_png_round_trip_is_exact_for_byte_values(tmp_path):
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, (20, 17, 3)) / 255.0
    path = tmp_path / "x.png"
    save_image(img, path)
    assert np.array_equal(load_image(path), img)


@pytest.mark.parametrize("mode,channels", [("L", 1), ("RGB", 3), ("RGBA", 3), ("P", 3)])
def test_load_modes(tmp_path, mode, channels):
    path = tmp_path / "m.png"
    Image.new(mode, (8, 6)).save(path)
    assert load_image(path).shape == (6, 8, channels)


def test_sixteen_bit_gray_is_scaled(tmp_path):
    path = tmp_path / "g16.png"
    Image.fromarray(np.full((4, 4), 65535, dtype=np.uint16)).save(path)
    assert np.allclose(load_image(path), 1.0)


def test_gray_alpha_is_refused(tmp_path):
    path = tmp_path / "la.png"
    Image.new("LA", (4, 4)).save(path)
    with pytest.raises(FormatError):
        load_image(path)


def test_missing_and_corrupt_files(tmp_path):
    with pytest.raises(DecodeError, match="nope.png"):
        load_image(tmp_path / "nope.png")
    bad = tmp_path / "bad.png"
    bad.write_bytes(b"not an image")
    with pytest.raises(DecodeError):
        load_image(bad)


def test_to_uint8_rounds_half_to_even():
    assert to_uint8(np.array([0.5 / 255, 1.5 / 255, 2.0])).tolist() == [0, 2, 255]


def test_luminance_weights_sum_to_one():
    assert np.allclose(to_luminance(np.ones((2, 2, 3))), 1.0)


def test_window_starts_clamp_last_origin():
    assert window_starts(300, 144, 120) == [0, 120, 156]
    assert window_starts(144, 144, 120) == [0]
    with pytest.raises(SizeError):
        window_starts(100, 144, 120)


def test_stride_beyond_patch_would_leave_gaps():
    with pytest.raises(DomainError):
        extract_patches(np.zeros((40, 40, 1)), 8, 9)


@settings(max_examples=30, deadline=None)
@given(h=st.integers(16, 60), w=st.integers(16, 60), size=st.integers(4, 16), stride=st.integers(1, 16))
def test_patches_cover_every_pixel_and_stitch_back(h, w, size, stride):
    stride = min(stride, size)
    img = np.random.default_rng(h * w).random((h, w, 3))
    grid = extract_patches(img, size, stride)
    assert all(p.shape == (size, size, 3) for p in grid.patches)
    assert np.allclose(stitch(grid), img)


def test_crop_border_and_hflip():
    img = np.arange(36.0).reshape(6, 6, 1)
    assert crop_border(img, 2).shape == (2, 2, 1)
    with pytest.raises(SizeError):
        crop_border(img, 3)
    assert np.array_equal(hflip(hflip(img)), img)
    assert hflip(img)[0, 0, 0] == 5.0
