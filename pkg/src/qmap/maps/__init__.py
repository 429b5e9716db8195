"""Full-reference similarity maps used as generator labels."""

from __future__ import annotations

import numpy as np

from .config import FrMethod, MapConfig
from .gradient import fsim_gm_map, gradient_magnitude
from .mdsi import mdsi_components, mdsi_map
from .phase import fsim_pc_map, phase_congruency
from .pooling import POOLINGS, avg_patchify_map, pool_map, save_map
from .ssim import ssim_map

GENERATORS = {
    FrMethod.SSIM: ssim_map,
    FrMethod.FSIM_GM: fsim_gm_map,
    FrMethod.FSIM_PC: fsim_pc_map,
    FrMethod.MDSI_GC: mdsi_map,
}


def compute_map(method, dist, ref, cfg: MapConfig | None = None) -> np.ndarray:
    return GENERATORS[FrMethod.parse(method)](dist, ref, cfg or MapConfig())


def map_border(method, cfg: MapConfig | None = None) -> int:
    """Pixels lost per side by a generator (only SSIM trims its border)."""
    cfg = cfg or MapConfig()
    return cfg.ssim_border if FrMethod.parse(method) is FrMethod.SSIM else 0


__all__ = [
    "FrMethod",
    "GENERATORS",
    "MapConfig",
    "POOLINGS",
    "avg_patchify_map",
    "compute_map",
    "fsim_gm_map",
    "fsim_pc_map",
    "gradient_magnitude",
    "map_border",
    "mdsi_components",
    "mdsi_map",
    "phase_congruency",
    "pool_map",
    "save_map",
    "ssim_map",
]
