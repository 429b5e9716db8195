"""Gradient magnitude planes and the FSIM gradient-similarity map."""

from __future__ import annotations

import numpy as np

from ..errors import DomainError, SizeError
from ..image import as_image, to_luminance
from ._common import check_pair, similarity
from .config import MapConfig

# Horizontal-derivative kernels; the vertical ones are their transposes.
KERNELS = {
    "scharr": np.array([[3.0, 0.0, -3.0], [10.0, 0.0, -10.0], [3.0, 0.0, -3.0]]) / 16.0,
    "prewitt": np.array([[1.0, 0.0, -1.0], [1.0, 0.0, -1.0], [1.0, 0.0, -1.0]]) / 3.0,
}


def correlate3x3(plane: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """3x3 correlation with replicate padding, same-size output."""
    padded = np.pad(plane, 1, mode="edge")
    h, w = plane.shape
    out = np.zeros((h, w), dtype=np.float64)
    for i in range(3):
        for j in range(3):
            if kernel[i, j] != 0.0:
                out += kernel[i, j] * padded[i:i + h, j:j + w]
    return out


def gradient_magnitude(plane: np.ndarray, operator: str = "scharr") -> np.ndarray:
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim != 2:
        raise DomainError(f"expected a 2-D plane, got shape {plane.shape}")
    if plane.shape[0] < 3 or plane.shape[1] < 3:
        raise SizeError(f"gradient needs at least 3x3 pixels, got {plane.shape}")
    try:
        kx = KERNELS[operator]
    except KeyError:
        raise DomainError(f"unknown gradient operator {operator!r}") from None
    gx = correlate3x3(plane, kx)
    gy = correlate3x3(plane, kx.T)
    return np.sqrt(gx * gx + gy * gy)


def fsim_gm_map(dist, ref, cfg: MapConfig | None = None) -> np.ndarray:
    """Gradient-magnitude similarity (Scharr, luminance on the 0-255 scale)."""
    cfg = cfg or MapConfig()
    dist, ref = check_pair(as_image(dist), as_image(ref))
    g1 = gradient_magnitude(to_luminance(dist) * cfg.dynamic_range, "scharr")
    g2 = gradient_magnitude(to_luminance(ref) * cfg.dynamic_range, "scharr")
    return np.clip(similarity(g1, g2, cfg.fsim_t2), 0.0, 1.0)
