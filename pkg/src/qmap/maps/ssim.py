"""Per-pixel SSIM on the valid interior of an 11x11 Gaussian window."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import SizeError
from ..image import as_image, to_luminance
from .config import MapConfig
from ._common import check_pair


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    """1-D normalized Gaussian taps; the 2-D window is their outer product."""
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def filter_valid(plane: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Separable correlation keeping only fully covered positions."""
    k = taps.size
    rows = sliding_window_view(plane, k, axis=0) @ taps
    return sliding_window_view(rows, k, axis=1) @ taps


def ssim_map(dist, ref, cfg: MapConfig | None = None) -> np.ndarray:
    """SSIM index map of ``dist`` against ``ref``.

    Statistics are Gaussian-weighted over each full window, so the result is
    ``gaussian_size - 1`` pixels smaller than the inputs along each axis.
    Negative values (anti-correlated structure) are clamped to 0.
    """
    cfg = cfg or MapConfig()
    dist, ref = check_pair(as_image(dist), as_image(ref))
    x = to_luminance(dist) * cfg.dynamic_range
    y = to_luminance(ref) * cfg.dynamic_range
    taps = gaussian_window(cfg.gaussian_size, cfg.gaussian_sigma)
    if x.shape[0] < taps.size or x.shape[1] < taps.size:
        raise SizeError(f"SSIM needs at least {taps.size}x{taps.size} pixels")

    c1 = (cfg.ssim_k1 * cfg.dynamic_range) ** 2
    c2 = (cfg.ssim_k2 * cfg.dynamic_range) ** 2

    mu_x = filter_valid(x, taps)
    mu_y = filter_valid(y, taps)
    var_x = filter_valid(x * x, taps) - mu_x * mu_x
    var_y = filter_valid(y * y, taps) - mu_y * mu_y
    cov = filter_valid(x * y, taps) - mu_x * mu_y

    num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return np.clip(num / den, 0.0, 1.0)
