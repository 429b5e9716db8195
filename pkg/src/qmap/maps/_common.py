from __future__ import annotations

import numpy as np

from ..errors import ShapeError


def check_pair(dist: np.ndarray, ref: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if dist.shape != ref.shape:
        raise ShapeError(
            f"distorted image {dist.shape} and reference {ref.shape} differ in shape"
        )
    return dist, ref


def similarity(a: np.ndarray, b: np.ndarray, c: float) -> np.ndarray:
    """Pointwise (2ab + c) / (a^2 + b^2 + c); exactly 1 where a == b."""
    return (2 * a * b + c) / (a * a + b * b + c)
