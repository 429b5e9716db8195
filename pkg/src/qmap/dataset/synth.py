"""Procedural reference images and graded synthetic distortions.

Everything is driven by named substreams of one seed, so a given seed
always produces byte-identical files regardless of worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from PIL import Image, ImageDraw
from scipy.fft import dctn, idctn
from scipy.ndimage import gaussian_filter

from ..errors import DomainError, SizeError
from ..image import as_image, load_image, save_image, to_uint8
from ..maps import MapConfig, fsim_gm_map
from ..nn.rng import substream
from .manifest import DatasetManifest, Entry, save_manifest

MIN_BASE_SIZE = 160
BLOCK = 32

BLUR_SIGMAS = (0.8, 1.6, 2.4, 3.2, 4.0)
NOISE_SIGMAS = (0.02, 0.05, 0.09, 0.14, 0.20)
JPEG_QUALITIES = (90, 70, 50, 30, 10)

KINDS = ("gaussian_blur", "white_noise", "jpeg_blocking", "local_blockwise")

# Standard JPEG luminance quantization table.
JPEG_LUMA = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)


@dataclass(frozen=True)
class DistortionRecipe:
    """One distortion kind at a severity ``level`` (1 mild to 5 severe).

    Level 0 is the identity and leaves the image untouched.
    """

    kind: str
    level: int

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown distortion kind {self.kind!r}; expected one of {KINDS}")
        if not 0 <= self.level <= 5:
            raise DomainError(f"level must be in 0..5, got {self.level}")

    @property
    def tag(self) -> str:
        return f"{self.kind}_{self.level}"


def default_recipes(kinds=KINDS, levels=(1, 2, 3, 4, 5)) -> list[DistortionRecipe]:
    return [DistortionRecipe(k, lv) for k in kinds for lv in levels]


# --- reference content -----------------------------------------------------

def _smooth_field(rng, size: int, sigma: float) -> np.ndarray:
    f = gaussian_filter(rng.standard_normal((size, size)), sigma, mode="wrap")
    f -= f.min()
    return f / (f.max() or 1.0)


def _palette(rng) -> np.ndarray:
    return rng.uniform(0.05, 0.95, size=(2, 3))


def _mix(t: np.ndarray, pal: np.ndarray) -> np.ndarray:
    return pal[0] * (1.0 - t[..., None]) + pal[1] * t[..., None]


def _waves(rng, size):
    yy, xx = np.mgrid[0:size, 0:size] / size
    t = np.zeros((size, size))
    for _ in range(3):
        fx, fy = rng.uniform(-12, 12, size=2)
        t += np.sin(2 * np.pi * (fx * xx + fy * yy) + rng.uniform(0, 2 * np.pi))
    return _mix((t - t.min()) / (np.ptp(t) or 1.0), _palette(rng))


def _checker(rng, size):
    cell = int(rng.integers(6, 24))
    yy, xx = np.mgrid[0:size, 0:size]
    t = ((yy // cell + xx // cell) % 2).astype(np.float64)
    t = 0.75 * t + 0.25 * _smooth_field(rng, size, size / 6)
    return _mix(t, _palette(rng))


def _texture(rng, size):
    a = _smooth_field(rng, size, rng.uniform(1.0, 3.0))
    b = _smooth_field(rng, size, size / 8)
    return np.stack([_smooth_field(rng, size, 1.5) * 0.3 + 0.7 * (a if c % 2 else b)
                     for c in range(3)], axis=-1)


def _shapes(rng, size):
    bg = tuple(int(v) for v in rng.integers(0, 256, 3))
    img = Image.new("RGB", (size, size), bg)
    draw = ImageDraw.Draw(img)
    for _ in range(int(rng.integers(15, 35))):
        x0, y0 = (int(v) for v in rng.integers(0, size, 2))
        w, h = (int(v) for v in rng.integers(6, size // 3, 2))
        color = tuple(int(v) for v in rng.integers(0, 256, 3))
        shape = int(rng.integers(3))
        if shape == 0:
            draw.rectangle([x0, y0, x0 + w, y0 + h], fill=color)
        elif shape == 1:
            draw.ellipse([x0, y0, x0 + w, y0 + h], fill=color)
        else:
            draw.line([x0, y0, x0 + w, y0 + h], fill=color, width=int(rng.integers(1, 5)))
    return np.asarray(img, dtype=np.float64) / 255.0


_BASES = (_waves, _checker, _texture, _shapes)


def procedural_base(seed: int, index: int, size: int = 192) -> np.ndarray:
    """A structured RGB reference image in [0, 1], cycling through content styles."""
    if size < MIN_BASE_SIZE:
        raise SizeError(f"base images must be at least {MIN_BASE_SIZE} px, got {size}")
    rng = substream(seed, "base", index)
    style = _BASES[index % len(_BASES)]
    img = style(rng, size)
    # Every base gets a second layer so no content is purely flat.
    overlay = _BASES[(index + 1 + int(rng.integers(len(_BASES) - 1))) % len(_BASES)](rng, size)
    alpha = 0.25 + 0.2 * _smooth_field(rng, size, size / 4)[..., None]
    return np.clip((1 - alpha) * img + alpha * overlay, 0.0, 1.0)


# --- distortions -----------------------------------------------------------

def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    return np.clip(gaussian_filter(img, sigma=(sigma, sigma, 0), mode="reflect"), 0.0, 1.0)


def white_noise(img: np.ndarray, sigma: float, field: np.ndarray) -> np.ndarray:
    return np.clip(img + sigma * field, 0.0, 1.0)


def jpeg_quant_table(quality: int) -> np.ndarray:
    if not 1 <= quality <= 100:
        raise DomainError("quality must be in 1..100")
    scale = 5000 / quality if quality < 50 else 200 - 2 * quality
    return np.clip(np.floor((JPEG_LUMA * scale + 50) / 100), 1, 255)


def jpeg_blocking(img: np.ndarray, quality: int) -> np.ndarray:
    """Quantize 8x8 block DCT coefficients of every channel."""
    h, w, c = img.shape
    ph, pw = -h % 8, -w % 8
    x = np.pad(img * 255.0 - 128.0, ((0, ph), (0, pw), (0, 0)), mode="edge")
    hh, ww = x.shape[:2]
    blocks = x.reshape(hh // 8, 8, ww // 8, 8, c).transpose(0, 2, 4, 1, 3)
    q = jpeg_quant_table(quality)
    coef = np.round(dctn(blocks, axes=(-2, -1), norm="ortho") / q) * q
    rec = idctn(coef, axes=(-2, -1), norm="ortho")
    out = rec.transpose(0, 3, 1, 4, 2).reshape(hh, ww, c)[:h, :w]
    return np.clip((out + 128.0) / 255.0, 0.0, 1.0)


def block_layout(rng, shape, count: int = 5):
    """Pick ``count`` non-overlapping 32x32 cells and a gray level for each."""
    h, w = shape[:2]
    cells = [(r, c) for r in range(0, h - BLOCK + 1, BLOCK) for c in range(0, w - BLOCK + 1, BLOCK)]
    if len(cells) < count:
        raise SizeError(f"image too small for {count} blocks")
    order = rng.permutation(len(cells))[:count]
    grays = rng.uniform(0.0, 1.0, size=count)
    return [(cells[i], g) for i, g in zip(order, grays)]


def local_blockwise(img: np.ndarray, layout) -> np.ndarray:
    out = img.copy()
    for (r, c), gray in layout:
        patch = out[r:r + BLOCK, c:c + BLOCK]
        mean = float(patch.mean())
        # Keep the block visibly different from what it covers.
        if abs(gray - mean) < 0.3:
            gray = (mean + 0.5) % 1.0
        patch[...] = gray
    return out


def distort(img, recipe: DistortionRecipe, seed: int, base_index: int) -> np.ndarray:
    """Apply ``recipe``; randomness is shared across the levels of one base."""
    img = as_image(img)
    lv = recipe.level
    if lv == 0:
        return img.copy()
    if recipe.kind == "gaussian_blur":
        return gaussian_blur(img, BLUR_SIGMAS[lv - 1])
    if recipe.kind == "white_noise":
        field = substream(seed, "noise", base_index).standard_normal(img.shape)
        return white_noise(img, NOISE_SIGMAS[lv - 1], field)
    if recipe.kind == "jpeg_blocking":
        return jpeg_blocking(img, JPEG_QUALITIES[lv - 1])
    layout = block_layout(substream(seed, "blocks", base_index), img.shape)
    return local_blockwise(img, layout[:lv])


def pseudo_score(dist, ref, cfg: MapConfig | None = None) -> float:
    """Scalar quality in [0, 100] from the mean gradient-similarity map."""
    return float(100.0 * np.mean(fsim_gm_map(dist, ref, cfg or MapConfig())))


# --- dataset assembly ------------------------------------------------------

def _quantized(img: np.ndarray) -> np.ndarray:
    return to_uint8(img).astype(np.float64) / 255.0


def synthesize(
    out_dir: str | os.PathLike,
    n_bases: int = 10,
    recipes=None,
    seed: int = 0,
    size: int = 192,
    bases=None,
    workers: int = 1,
    cfg: MapConfig | None = None,
) -> DatasetManifest:
    """Write references, distorted images and ``manifest.csv`` into ``out_dir``.

    ``bases`` overrides the procedural references with caller images (each at
    least 160 px on both sides).  Scores are computed from the stored 8-bit
    files so they match what a loader will see.
    """
    out_dir = os.fspath(out_dir)
    recipes = list(recipes) if recipes is not None else default_recipes()
    if bases is None:
        bases = [procedural_base(seed, i, size) for i in range(n_bases)]
    bases = [as_image(b) for b in bases]
    for i, b in enumerate(bases):
        if min(b.shape[:2]) < MIN_BASE_SIZE:
            raise SizeError(f"base image {i} is {b.shape[0]}x{b.shape[1]}; need >= {MIN_BASE_SIZE} px")
    os.makedirs(os.path.join(out_dir, "ref"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "dist"), exist_ok=True)
    cfg = cfg or MapConfig()

    def one_base(i: int) -> list[Entry]:
        ref_rel = f"ref/ref{i:03d}.png"
        ref = _quantized(bases[i])
        save_image(ref, os.path.join(out_dir, ref_rel))
        rows = []
        for r in recipes:
            eid = f"ref{i:03d}_{r.tag}"
            rel = f"dist/{eid}.png"
            d = _quantized(distort(ref, r, seed, i))
            save_image(d, os.path.join(out_dir, rel))
            rows.append(Entry(eid, rel, ref_rel, r.kind, r.level, pseudo_score(d, ref, cfg), "MOS"))
        return rows

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            per_base = list(ex.map(one_base, range(len(bases))))
    else:
        per_base = [one_base(i) for i in range(len(bases))]
    manifest = DatasetManifest(tuple(e for rows in per_base for e in rows), (0.0, 100.0),
                               os.path.abspath(out_dir))
    save_manifest(manifest, os.path.join(out_dir, "manifest.csv"))
    return manifest


def load_pair(m: DatasetManifest, entry: Entry) -> tuple[np.ndarray, np.ndarray | None]:
    dist = load_image(m.distorted_path(entry))
    ref_path = m.reference_path(entry)
    return dist, (load_image(ref_path) if ref_path else None)
