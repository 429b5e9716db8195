"""Rank and linear correlation between predicted and subjective scores."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

from ..errors import ShapeError, UndefinedCorrelationError


def _pair(pred, gt) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=np.float64).reshape(-1)
    g = np.asarray(gt, dtype=np.float64).reshape(-1)
    if p.shape != g.shape:
        raise ShapeError(f"length mismatch: {p.size} predictions vs {g.size} targets")
    if p.size < 3:
        raise UndefinedCorrelationError(f"need at least 3 samples, got {p.size}")
    return p, g


def _pearson(p: np.ndarray, g: np.ndarray) -> float:
    dp = p - p.mean()
    dg = g - g.mean()
    sp = np.sqrt(np.dot(dp, dp))
    sg = np.sqrt(np.dot(dg, dg))
    if sp == 0.0 or sg == 0.0:
        raise UndefinedCorrelationError("correlation undefined for a constant vector")
    r = np.dot(dp, dg) / (sp * sg)
    return float(np.clip(r, -1.0, 1.0))


def plcc(pred, gt) -> float:
    """Pearson linear correlation coefficient."""
    return _pearson(*_pair(pred, gt))


def srcc(pred, gt) -> float:
    """Spearman rank correlation; tied values share their average rank."""
    p, g = _pair(pred, gt)
    return _pearson(rankdata(p, method="average"), rankdata(g, method="average"))
