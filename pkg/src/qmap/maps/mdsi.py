"""Gradient-chromaticity similarity map (MDSI components, no downsampling)."""

from __future__ import annotations

import numpy as np

from ..errors import ChannelError
from ..image import as_image
from ._common import check_pair, similarity
from .config import MapConfig
from .gradient import gradient_magnitude

# Rows produce L, H, M from RGB.
LHM = np.array(
    [
        [0.299, 0.587, 0.114],
        [0.30, 0.04, -0.35],
        [0.34, -0.60, 0.17],
    ]
)


def lhm_channels(img: np.ndarray, scale: float = 255.0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rgb = img * scale
    planes = [
        LHM[k, 0] * rgb[:, :, 0] + LHM[k, 1] * rgb[:, :, 1] + LHM[k, 2] * rgb[:, :, 2]
        for k in range(3)
    ]
    return planes[0], planes[1], planes[2]


def mdsi_components(dist, ref, cfg: MapConfig | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Return the (gradient similarity, chromaticity similarity) maps, unclamped."""
    cfg = cfg or MapConfig()
    dist, ref = check_pair(as_image(dist), as_image(ref))
    if dist.shape[2] != 3:
        raise ChannelError("MDSI needs 3-channel images")
    l_d, h_d, m_d = lhm_channels(dist, cfg.dynamic_range)
    l_r, h_r, m_r = lhm_channels(ref, cfg.dynamic_range)

    g_r = gradient_magnitude(l_r, "prewitt")
    g_d = gradient_magnitude(l_d, "prewitt")
    g_f = gradient_magnitude(0.5 * (l_r + l_d), "prewitt")
    gs = similarity(g_r, g_d, cfg.mdsi_c1)
    gs = gs + (similarity(g_d, g_f, cfg.mdsi_c2) - similarity(g_r, g_f, cfg.mdsi_c2))

    num = 2 * (h_r * h_d + m_r * m_d) + cfg.mdsi_c3
    den = (h_r * h_r + m_r * m_r) + (h_d * h_d + m_d * m_d) + cfg.mdsi_c3
    cs = num / den
    return gs, cs


def mdsi_map(dist, ref, cfg: MapConfig | None = None) -> np.ndarray:
    cfg = cfg or MapConfig()
    gs, cs = mdsi_components(dist, ref, cfg)
    combined = cs + cfg.mdsi_alpha * (gs - cs)
    return np.clip(combined, 0.0, 1.0)
