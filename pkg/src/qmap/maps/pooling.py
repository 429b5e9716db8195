"""Scalar pooling of quality maps, block averaging, and map export."""

from __future__ import annotations

import os

import numpy as np
from PIL import Image as PILImage

from ..errors import DomainError, SizeError

POOLINGS = ("average", "std_dev", "deviation")


def pool_map(qmap: np.ndarray, strategy: str = "average", q: float = 0.25) -> float:
    """Collapse a map to one number.

    ``std_dev`` is the population standard deviation (lower means better);
    ``deviation`` is the mean absolute deviation of ``qmap ** q``.
    """
    qmap = np.asarray(qmap, dtype=np.float64)
    if qmap.size == 0:
        raise SizeError("cannot pool an empty map")
    if strategy == "average":
        return float(qmap.mean())
    if strategy == "std_dev":
        return float(qmap.std())
    if strategy == "deviation":
        powered = np.power(np.clip(qmap, 0.0, None), q)
        return float(np.abs(powered - powered.mean()).mean())
    raise DomainError(f"unknown pooling {strategy!r}")


def avg_patchify_map(qmap: np.ndarray, block: int) -> np.ndarray:
    """Replace each pixel by the mean of its ``block x block`` tile (edge tiles truncated)."""
    qmap = np.asarray(qmap, dtype=np.float64)
    if block < 1:
        raise DomainError("block must be at least 1")
    if block == 1:
        return qmap.copy()
    h, w = qmap.shape
    rs = np.arange(0, h, block)
    cs = np.arange(0, w, block)
    sums = np.add.reduceat(np.add.reduceat(qmap, rs, axis=0), cs, axis=1)
    heights = np.minimum(block, h - rs)
    widths = np.minimum(block, w - cs)
    means = sums / np.outer(heights, widths)
    return np.repeat(np.repeat(means, heights, axis=0), widths, axis=1)


def map_to_bytes(qmap: np.ndarray) -> np.ndarray:
    qmap = np.asarray(qmap, dtype=np.float64)
    if qmap.size and (qmap.min() < 0.0 or qmap.max() > 1.0):
        raise DomainError("map values must lie in [0, 1]")
    return np.rint(qmap * 255.0).astype(np.uint8)


def save_map(qmap: np.ndarray, path: str | os.PathLike) -> None:
    """Write a map as an 8-bit grayscale PNG; dark pixels are distorted ones."""
    PILImage.fromarray(map_to_bytes(qmap), mode="L").save(os.fspath(path), format="PNG")
