from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from ..nn.rng import substream
from .logistic import LogisticParams, fit_logistic
from .metrics import plcc, srcc

REPORT_COLUMNS = ("name", "n", "srcc", "plcc", "plcc_mapped", "eta1", "eta2", "eta3", "eta4")


@dataclass
class EvalReport:
    srcc: float
    plcc: float
    n: int
    logistic: LogisticParams | None = None
    plcc_mapped: float | None = None
    per_type: dict[str, tuple[float, float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"n": self.n, "srcc": self.srcc, "plcc": self.plcc}
        if self.logistic is not None:
            out["plcc_mapped"] = self.plcc_mapped
            out["logistic"] = self.logistic.to_dict()
        if self.per_type:
            out["per_type"] = {k: {"srcc": s, "plcc": p} for k, (s, p) in sorted(self.per_type.items())}
        return out

    def row(self, name: str) -> list:
        eta = self.logistic.to_dict().values() if self.logistic else [""] * 4
        mapped = "" if self.plcc_mapped is None else self.plcc_mapped
        return [name, self.n, self.srcc, self.plcc, mapped, *eta]


def evaluate(pred, gt, types=None, logistic: bool = False) -> EvalReport:
    """Correlations of ``pred`` against ``gt``, optionally per distortion type.

    With ``logistic=True`` the predictions are also passed through a fitted
    logistic before a second PLCC is taken.  Types with fewer than three
    samples or constant scores are left out of the breakdown.
    """
    p = np.asarray(pred, dtype=np.float64).reshape(-1)
    g = np.asarray(gt, dtype=np.float64).reshape(-1)
    report = EvalReport(srcc(p, g), plcc(p, g), int(p.size))
    if logistic:
        params, mapped = fit_logistic(p, g)
        report.logistic = params
        report.plcc_mapped = plcc(mapped, g)
    if types is not None:
        types = np.asarray(list(types))
        for t in sorted(set(types.tolist())):
            sel = types == t
            if sel.sum() < 3 or np.ptp(p[sel]) == 0 or np.ptp(g[sel]) == 0:
                continue
            report.per_type[t] = (srcc(p[sel], g[sel]), plcc(p[sel], g[sel]))
    return report


def logistic_holdout(pred, gt, seed: int = 0, fit_fraction: float = 0.8) -> EvalReport:
    """Fit the logistic on a random share of the data and report on the rest."""
    p = np.asarray(pred, dtype=np.float64).reshape(-1)
    g = np.asarray(gt, dtype=np.float64).reshape(-1)
    order = substream(seed, "logistic_holdout").permutation(p.size)
    cut = int(round(fit_fraction * p.size))
    fit_idx, rep_idx = order[:cut], order[cut:]
    params, _ = fit_logistic(p[fit_idx], g[fit_idx])
    report = evaluate(p[rep_idx], g[rep_idx])
    report.logistic = params
    report.plcc_mapped = plcc(params(p[rep_idx]), g[rep_idx])
    return report


def write_reports(rows: list[tuple[str, EvalReport]], path: str | os.PathLike) -> None:
    with open(os.fspath(path), "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for name, rep in rows:
            w.writerow(rep.row(name))
