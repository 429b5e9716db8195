"""Materialize full-reference maps as stored generator labels.

Layout under ``out_dir/<method>/``::

    index.csv          id,image,map,score
    <id>.png           8-bit map (255 = identical)
    images/<id>.png    border-cropped input (only for border-trimming maps)

``image`` and ``map`` paths in the index are relative to the index file.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..errors import LabelError, LoadError
from ..image import crop_border, extract_patches, load_image, save_image
from ..maps import FrMethod, MapConfig, compute_map, map_border, save_map
from .manifest import DatasetManifest

INDEX_HEADER = ("id", "image", "map", "score")


@dataclass(frozen=True)
class LabelRow:
    id: str
    image: str
    map: str
    score: float


@dataclass(frozen=True)
class LabelStore:
    root: str
    method: FrMethod
    rows: tuple[LabelRow, ...]

    @property
    def index_path(self) -> str:
        return os.path.join(self.root, "index.csv")

    def path(self, rel: str) -> str:
        return os.path.normpath(os.path.join(self.root, rel))

    def load(self, row: LabelRow) -> tuple[np.ndarray, np.ndarray]:
        """Return the aligned ``(image, map)`` pair with the map in [0, 1]."""
        img = load_image(self.path(row.image))
        qmap = load_image(self.path(row.map))[:, :, 0]
        if img.shape[:2] != qmap.shape:
            raise LoadError(f"{row.id}: image {img.shape[:2]} and map {qmap.shape} differ in size")
        return img, qmap

    def subset(self, ids) -> "LabelStore":
        keep = set(ids)
        return LabelStore(self.root, self.method, tuple(r for r in self.rows if r.id in keep))


def materialize_labels(
    m: DatasetManifest,
    method,
    out_dir: str | os.PathLike,
    cfg: MapConfig | None = None,
    workers: int = 1,
) -> LabelStore:
    """Compute ``method`` for every entry and write the label store."""
    method = FrMethod.parse(method)
    cfg = cfg or MapConfig()
    root = os.path.join(os.path.abspath(os.fspath(out_dir)), method.value)
    border = map_border(method, cfg)
    os.makedirs(root, exist_ok=True)
    if border:
        os.makedirs(os.path.join(root, "images"), exist_ok=True)

    def one(entry) -> LabelRow:
        ref_path = m.reference_path(entry)
        if ref_path is None:
            raise LabelError(f"{entry.id}: full-reference labels need a reference image")
        dist = load_image(m.distorted_path(entry))
        ref = load_image(ref_path)
        qmap = compute_map(method, dist, ref, cfg)
        save_map(qmap, os.path.join(root, f"{entry.id}.png"))
        if border:
            image_rel = f"images/{entry.id}.png"
            save_image(crop_border(dist, border), os.path.join(root, image_rel))
        else:
            image_rel = os.path.relpath(m.distorted_path(entry), root).replace(os.sep, "/")
        return LabelRow(entry.id, image_rel, f"{entry.id}.png", entry.score)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            rows = tuple(ex.map(one, m.entries))
    else:
        rows = tuple(one(e) for e in m.entries)
    store = LabelStore(root, method, rows)
    write_index(store)
    return store


def write_index(store: LabelStore) -> None:
    with open(store.index_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(INDEX_HEADER)
        for r in store.rows:
            w.writerow([r.id, r.image, r.map, repr(float(r.score))])


def load_labels(root: str | os.PathLike, method=None) -> LabelStore:
    """Open a store from its method directory (or its parent plus ``method``)."""
    root = os.path.abspath(os.fspath(root))
    if method is not None:
        root = os.path.join(root, FrMethod.parse(method).value)
    index = os.path.join(root, "index.csv")
    try:
        with open(index, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise LoadError(f"{index}: cannot read label index ({exc.strerror})") from exc
    if not rows or tuple(rows[0]) != INDEX_HEADER:
        raise LoadError(f"{index}:1: expected header {','.join(INDEX_HEADER)}")
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(INDEX_HEADER):
            raise LoadError(f"{index}:{lineno}: expected {len(INDEX_HEADER)} fields")
        try:
            out.append(LabelRow(row[0], row[1], row[2], float(row[3])))
        except ValueError:
            raise LoadError(f"{index}:{lineno}: score must be numeric") from None
    return LabelStore(root, FrMethod.parse(os.path.basename(root)), tuple(out))


def patch_arrays(store: LabelStore, patch_size: int = 144, stride: int = 120, ids=None):
    """Cut aligned training patches from a label store.

    Returns ``(images, maps, scores, owners)``: ``(N, P, P, C)`` image
    patches, ``(N, P, P)`` map patches, the owning entry's score for each
    patch, and the owning entry id.
    """
    rows = store.rows if ids is None else store.subset(ids).rows
    images, maps, scores, owners = [], [], [], []
    for row in rows:
        img, qmap = store.load(row)
        gi = extract_patches(img, patch_size, stride)
        gm = extract_patches(qmap, patch_size, stride)
        images.extend(gi.patches)
        maps.extend(gm.patches)
        scores.extend([row.score] * len(gi))
        owners.extend([row.id] * len(gi))
    if not images:
        raise LabelError("no patches: the label store is empty")
    return np.stack(images), np.stack(maps), np.asarray(scores), owners
