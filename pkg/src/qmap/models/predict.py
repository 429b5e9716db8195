"""Whole-image scoring by averaging overlapping patch scores."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ..errors import ShapeError
from ..image import as_image, extract_patches, stitch
from ..nn import ComputeGraph
from .pooler import FusionMode, pooler_scores
from .training import _as_generators, pooler_features

PATCH_SIZE = 144
STRIDE = 120


def _chunk_results(func, chunks, workers: int):
    # Chunk boundaries never depend on ``workers``, so results are bit-identical.
    if workers <= 1 or len(chunks) <= 1:
        return [func(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, chunks))


def predict_score(
    gen,
    pool: ComputeGraph,
    fusion: FusionMode | None,
    img,
    patch_size: int = PATCH_SIZE,
    stride: int = STRIDE,
    batch_size: int = 8,
    workers: int = 1,
) -> tuple[float, np.ndarray | None]:
    """Score one image; returns the mean patch score and the stitched map.

    ``gen`` may be one generator, a list aligned with ``fusion.map_methods``,
    or ``None`` to feed raw patches to the pooler.  The stitched map averages
    overlapping patch predictions; it is ``(H, W)`` for one generator,
    ``(H, W, k)`` for several and ``None`` without generators.
    """
    img = as_image(img)
    gens = _as_generators(gen, fusion)
    size = pool.meta.get("spec", {}).get("input_size")
    if size is not None and size != patch_size:
        raise ShapeError(f"pooler expects {size}x{size} patches, not {patch_size}")
    grid = extract_patches(img, patch_size, stride)
    patches = np.stack(grid.patches)
    chunks = [patches[i:i + batch_size] for i in range(0, len(patches), batch_size)]

    def run(chunk):
        feats = pooler_features(chunk, gens, fusion, batch_size=batch_size)
        return feats, pooler_scores(pool, feats.astype(pool.dtype), batch_size=batch_size)

    results = _chunk_results(run, chunks, workers)
    scores = np.concatenate([r[1] for r in results])
    qmap = None
    if gens:
        feats = np.concatenate([r[0] for r in results])  # (P, k, S, S)
        per_patch = [f.transpose(1, 2, 0) for f in feats]
        qmap = stitch(grid, per_patch)
        if qmap.shape[2] == 1:
            qmap = qmap[:, :, 0]
    return float(np.mean(scores)), qmap
