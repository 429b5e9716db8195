from __future__ import annotations

import numpy as np
from scipy.special import expit

from ..errors import DomainError, ShapeError


def loss_bce_sigmoid(logits, targets) -> tuple[float, np.ndarray]:
    """Mean binary cross entropy of ``sigmoid(logits)`` against soft targets.

    Uses ``max(z, 0) - z*t + log1p(exp(-|z|))`` so large logits stay finite.
    The gradient with respect to the logits is ``(sigmoid(z) - t) / N``.
    """
    z = np.asarray(logits)
    t = np.asarray(targets)
    if z.shape != t.shape:
        raise ShapeError(f"logits {z.shape} and targets {t.shape} differ in shape")
    if t.size and (t.min() < 0.0 or t.max() > 1.0 or not np.all(np.isfinite(t))):
        raise DomainError("BCE targets must lie in [0, 1]")
    z64 = z.astype(np.float64)
    t64 = t.astype(np.float64)
    per = np.maximum(z64, 0.0) - z64 * t64 + np.log1p(np.exp(-np.abs(z64)))
    n = z.size
    grad = (expit(z64) - t64) / n
    return float(per.sum() / n), grad.astype(z.dtype if z.dtype.kind == "f" else np.float64)


def loss_mse(pred, target) -> tuple[float, np.ndarray]:
    """Mean squared error and its gradient ``2 (pred - target) / N``."""
    p = np.asarray(pred)
    t = np.asarray(target)
    if p.shape != t.shape:
        raise ShapeError(f"prediction {p.shape} and target {t.shape} differ in shape")
    diff = p.astype(np.float64) - t.astype(np.float64)
    n = p.size
    grad = 2.0 * diff / n
    return float(np.sum(diff * diff) / n), grad.astype(p.dtype if p.dtype.kind == "f" else np.float64)
