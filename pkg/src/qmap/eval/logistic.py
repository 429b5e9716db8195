"""Four-parameter logistic mapping from objective to subjective scale."""

from __future__ import annotations

from dataclasses import astuple, dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from ..errors import DomainError, FitError, ShapeError

MAX_ITER = 10_000
CHUNK = 2_000


@dataclass(frozen=True)
class LogisticParams:
    eta1: float
    eta2: float
    eta3: float
    eta4: float

    def __call__(self, q) -> np.ndarray:
        return logistic(np.asarray(q, dtype=np.float64), *astuple(self))

    def to_dict(self) -> dict:
        return {"eta1": self.eta1, "eta2": self.eta2, "eta3": self.eta3, "eta4": self.eta4}


def logistic(q: np.ndarray, eta1: float, eta2: float, eta3: float, eta4: float) -> np.ndarray:
    """Saturating map from ``eta2`` (low ``q``) to ``eta1`` (high ``q``)."""
    return (eta1 - eta2) * expit((q - eta3) / abs(eta4)) + eta2


def _sse(theta, q, y) -> float:
    if theta[3] == 0.0:
        return np.inf
    r = logistic(q, *theta) - y
    return float(np.dot(r, r))


def fit_logistic(pred, gt, max_iter: int = MAX_ITER) -> tuple[LogisticParams, np.ndarray]:
    """Least-squares logistic fit by Nelder-Mead simplex search.

    Starts from (max gt, min gt, median pred, std pred), with the first two
    swapped when pred and gt are anti-correlated, and restarts the simplex
    from its own optimum until a restart no longer lowers the error, all
    within ``max_iter`` total iterations.  Returns the parameters and the
    mapped predictions.
    """
    q = np.asarray(pred, dtype=np.float64).reshape(-1)
    y = np.asarray(gt, dtype=np.float64).reshape(-1)
    if q.shape != y.shape:
        raise ShapeError(f"length mismatch: {q.size} predictions vs {y.size} targets")
    if q.size < 8:
        raise DomainError(f"logistic fit needs at least 8 samples, got {q.size}")
    if np.ptp(y) == 0.0 or np.ptp(q) == 0.0:
        raise DomainError("logistic fit is degenerate for constant inputs")

    hi, lo = y.max(), y.min()
    if np.cov(q, y)[0, 1] < 0:
        hi, lo = lo, hi
    theta = np.array([hi, lo, np.median(q), q.std()])
    best = _sse(theta, q, y)
    used = 0
    converged = False
    while used < max_iter:
        res = minimize(_sse, theta, args=(q, y), method="Nelder-Mead",
                       options={"maxiter": min(CHUNK, max_iter - used), "xatol": 1e-10,
                                "fatol": 1e-20, "adaptive": True})
        used += max(res.nit, 1)
        improved = res.fun < best * (1.0 - 1e-12)
        if res.fun <= best:
            theta, best = res.x, res.fun
        if not improved or best == 0.0:
            converged = True
            break
    if not converged:
        rmse = np.sqrt(best / q.size)
        raise FitError(f"logistic fit did not converge in {max_iter} iterations (RMSE {rmse:.6g})")
    params = LogisticParams(*(float(t) for t in theta))
    return params, params(q)
