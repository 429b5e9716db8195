"""Patch-averaging study and repeated random-split orchestration."""

from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..dataset.split import SplitSpec, split_references
from ..errors import DomainError, ShapeError
from ..image import extract_patches
from ..maps import avg_patchify_map
from ..models import PoolNetSpec, build_pooler, pooler_scores, train_pooler
from ..models.training import POOLER_LR
from .metrics import plcc, srcc

log = logging.getLogger(__name__)

STUDY_BLOCKS = (1, 2, 4, 8, 16, 24, 36, 48)
STUDY_COLUMNS = ("block", "srcc", "plcc", "n_train", "n_test")


@dataclass(frozen=True)
class StudyRow:
    block: int
    srcc: float
    plcc: float
    n_train: int
    n_test: int


@dataclass(frozen=True)
class StudySetup:
    """Pooler and training settings shared by every block size."""

    spec: PoolNetSpec = PoolNetSpec()
    epochs: int = 10
    lr: float = POOLER_LR
    batch_size: int = 8
    stride: int | None = None
    train_fraction: float = 0.8
    seed: int = 0


def _patches(maps, idx, size, stride):
    out, owner = [], []
    for i in idx:
        grid = extract_patches(maps[i], size, stride)
        out.extend(grid.patches)
        owner.extend([i] * len(grid))
    return np.stack(out), np.asarray(owner)


def train_eval_maps(maps, scores, train_idx, test_idx, setup: StudySetup) -> StudyRow:
    """Train a fresh pooler on map patches and score held-out images.

    Each training patch inherits its image's score; a test image's
    prediction is the mean over its patches.
    """
    size = setup.spec.input_size
    stride = setup.stride or size
    scores = np.asarray(scores, dtype=np.float64)
    x_tr, own_tr = _patches(maps, train_idx, size, stride)
    x_te, own_te = _patches(maps, test_idx, size, stride)
    pool = build_pooler(setup.spec, seed=setup.seed)
    pool, _ = train_pooler(pool, x_tr, scores[own_tr], epochs=setup.epochs, lr=setup.lr,
                           seed=setup.seed, batch_size=setup.batch_size)
    patch_pred = pooler_scores(pool, x_te[:, None].astype(pool.dtype), batch_size=setup.batch_size)
    pred = np.array([patch_pred[own_te == i].mean() for i in test_idx])
    gt = scores[list(test_idx)]
    return StudyRow(0, srcc(pred, gt), plcc(pred, gt), len(train_idx), len(test_idx))


def patch_average_study(
    maps,
    scores,
    groups=None,
    blocks=STUDY_BLOCKS,
    setup: StudySetup | None = None,
    csv_path: str | os.PathLike | None = None,
) -> list[StudyRow]:
    """Degrade maps to ``block x block`` averages and measure what is lost.

    For every block size a fresh pooler (same seed) is trained on the
    degraded training maps and evaluated on held-out images.  ``groups``
    names the content each map comes from; the split keeps each group on one
    side (default: one group per map).
    """
    setup = setup or StudySetup()
    maps = [np.asarray(m, dtype=np.float64) for m in maps]
    if not maps:
        raise DomainError("study needs at least one map")
    if any(m.shape != maps[0].shape or m.ndim != 2 for m in maps):
        raise ShapeError("study maps must be 2-D and share one shape")
    if len(scores) != len(maps):
        raise ShapeError(f"{len(maps)} maps but {len(scores)} scores")
    groups = [str(i) for i in range(len(maps))] if groups is None else [str(g) for g in groups]
    train_groups, _ = split_references(groups, SplitSpec(setup.train_fraction, setup.seed))
    keep = set(train_groups)
    train_idx = [i for i, g in enumerate(groups) if g in keep]
    test_idx = [i for i, g in enumerate(groups) if g not in keep]

    rows = []
    for block in blocks:
        degraded = [avg_patchify_map(m, block) for m in maps]
        r = train_eval_maps(degraded, scores, train_idx, test_idx, setup)
        rows.append(StudyRow(int(block), r.srcc, r.plcc, r.n_train, r.n_test))
        log.info("block %d: srcc %.4f plcc %.4f", block, r.srcc, r.plcc)
    if csv_path is not None:
        write_study(rows, csv_path)
    return rows


def write_study(rows: list[StudyRow], path: str | os.PathLike) -> None:
    with open(os.fspath(path), "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STUDY_COLUMNS)
        for r in rows:
            w.writerow([r.block, repr(r.srcc), repr(r.plcc), r.n_train, r.n_test])


@dataclass(frozen=True)
class SplitSummary:
    seeds: tuple[int, ...]
    values: tuple
    median: object

    def to_dict(self) -> dict:
        return {"seeds": list(self.seeds), "values": list(self.values), "median": self.median}


def _median(values):
    if isinstance(values[0], dict):
        return {k: float(np.median(sorted(v[k] for v in values))) for k in values[0]}
    return float(np.median(sorted(values)))


def repeated_splits(
    experiment: Callable[[int], object],
    repetitions: int = 10,
    seed: int = 0,
    workers: int = 1,
) -> SplitSummary:
    """Run ``experiment(split_seed)`` for consecutive seeds and take medians.

    ``experiment`` returns a number or a dict of numbers; dicts are
    aggregated key by key.
    """
    if repetitions < 1:
        raise DomainError("repetitions must be positive")
    seeds = tuple(seed + i for i in range(repetitions))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            values = tuple(ex.map(experiment, seeds))
    else:
        values = tuple(experiment(s) for s in seeds)
    return SplitSummary(seeds, values, _median(list(values)))
