"""Image containers and the small set of pixel operations the pipeline needs.

Images are plain ``float64`` numpy arrays of shape ``(H, W, C)`` with ``C`` in
``{1, 3}`` and every value in ``[0, 1]``.  Single-channel intermediate buffers
(luminance, gradients) are 2-D arrays called planes; quality maps are planes
restricted to ``[0, 1]``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image as PILImage
from PIL import UnidentifiedImageError

from .errors import DecodeError, DomainError, FormatError, ShapeError, SizeError

BT601 = (0.299, 0.587, 0.114)


def as_image(data) -> np.ndarray:
    """Validate ``data`` as an image and return it as a float64 ``(H, W, C)`` array.

    2-D input is promoted to a single-channel image.
    """
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise ShapeError(f"image must be HxWx1 or HxWx3, got shape {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise SizeError(f"image has an empty dimension: {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("image contains non-finite intensities")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise DomainError(
            f"image intensities must lie in [0, 1], got [{arr.min()}, {arr.max()}]"
        )
    return arr


def load_image(path: str | os.PathLike) -> np.ndarray:
    """Read a PNG or BMP file into a unit-interval image.

    8-bit data is divided by 255 and 16-bit data by 65535.  An alpha channel is
    dropped; two-channel (gray + alpha) files are rejected.
    """
    path = os.fspath(path)
    try:
        with PILImage.open(path) as im:
            im.load()
            mode = im.mode
            if mode == "P":
                im = im.convert("RGBA" if "transparency" in im.info else "RGB")
                mode = im.mode
            elif mode == "1":
                im = im.convert("L")
                mode = "L"
            if mode in ("I;16", "I;16B", "I;16L", "I"):
                raw = np.asarray(im, dtype=np.float64)
                data = raw / 65535.0
                data = data[:, :, None]
            elif mode == "L":
                data = np.asarray(im, dtype=np.float64)[:, :, None] / 255.0
            elif mode == "RGB":
                data = np.asarray(im, dtype=np.float64) / 255.0
            elif mode == "RGBA":
                data = np.asarray(im, dtype=np.float64)[:, :, :3] / 255.0
            else:
                raise FormatError(f"{path}: unsupported image mode {mode!r}")
    except FileNotFoundError as exc:
        raise DecodeError(f"{path}: no such file") from exc
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise DecodeError(f"{path}: cannot decode image ({exc})") from exc
    return as_image(np.clip(data, 0.0, 1.0))


def to_uint8(img: np.ndarray) -> np.ndarray:
    """Quantize unit-interval values to bytes with round-half-to-even."""
    return np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def save_image(img: np.ndarray, path: str | os.PathLike) -> None:
    """Write an image (or plane) as an 8-bit PNG."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    try:
        PILImage.fromarray(to_uint8(arr)).save(os.fspath(path), format="PNG")
    except OSError as exc:
        raise OSError(f"{os.fspath(path)}: cannot write image ({exc})") from exc


def to_luminance(img: np.ndarray) -> np.ndarray:
    """Return the BT.601 luma plane of an RGB image (gray images pass through)."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    if img.shape[2] == 1:
        return img[:, :, 0]
    r, g, b = img[:, :, 0], img[:, :, 1], img[:, :, 2]
    return BT601[0] * r + BT601[1] * g + BT601[2] * b


@dataclass(frozen=True)
class PatchGrid:
    """Square patches cut from one image on a (clamped) sliding-window grid."""

    patch_size: int
    stride: int
    origins: list[tuple[int, int]]
    patches: list[np.ndarray] = field(repr=False)
    source_shape: tuple[int, ...] = ()

    def __len__(self) -> int:
        return len(self.origins)


def window_starts(length: int, size: int, stride: int) -> list[int]:
    """Sliding-window origins along one axis; the last one is clamped to the edge."""
    if length < size:
        raise SizeError(f"extent {length} is smaller than the window size {size}")
    if stride < 1:
        raise DomainError("stride must be positive")
    starts = list(range(0, length - size + 1, stride))
    if starts[-1] != length - size:
        starts.append(length - size)
    return starts


def extract_patches(img: np.ndarray, patch_size: int = 144, stride: int = 120) -> PatchGrid:
    """Cut ``img`` into overlapping ``patch_size`` squares covering every pixel."""
    img = np.asarray(img)
    h, w = img.shape[:2]
    if h < patch_size or w < patch_size:
        raise SizeError(
            f"image {h}x{w} is smaller than the patch size {patch_size}"
        )
    if stride > patch_size:
        raise DomainError(f"stride {stride} exceeds patch size {patch_size}; pixels would be skipped")
    rows = window_starts(h, patch_size, stride)
    cols = window_starts(w, patch_size, stride)
    origins = [(r, c) for r in rows for c in cols]
    patches = [img[r:r + patch_size, c:c + patch_size] for r, c in origins]
    return PatchGrid(patch_size, stride, origins, patches, tuple(img.shape))


def stitch(grid: PatchGrid, values: list[np.ndarray] | None = None) -> np.ndarray:
    """Reassemble patch-shaped arrays onto the source canvas, averaging overlaps."""
    values = grid.patches if values is None else values
    first = np.asarray(values[0])
    shape = grid.source_shape[:2] + first.shape[2:]
    acc = np.zeros(shape, dtype=np.float64)
    count = np.zeros(grid.source_shape[:2], dtype=np.float64)
    p = grid.patch_size
    for (r, c), v in zip(grid.origins, values):
        acc[r:r + p, c:c + p] += v
        count[r:r + p, c:c + p] += 1.0
    if acc.ndim == 3:
        count = count[:, :, None]
    return acc / count


def crop_border(img: np.ndarray, n: int) -> np.ndarray:
    """Drop ``n`` rows/columns from every side."""
    img = np.asarray(img)
    if n < 0:
        raise DomainError("border width must be non-negative")
    h, w = img.shape[:2]
    if h <= 2 * n or w <= 2 * n:
        raise SizeError(f"cropping {n} px from a {h}x{w} image leaves nothing")
    if n == 0:
        return img
    return img[n:h - n, n:w - n]


def hflip(img: np.ndarray) -> np.ndarray:
    """Mirror left-right."""
    return np.asarray(img)[:, ::-1].copy()
