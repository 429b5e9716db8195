"""Dataset manifests: CSV ingestion, validation and score normalization.

File layout (UTF-8)::

    #score_range,<lo>,<hi>
    id,distorted,reference,type,level,score,score_kind
    img001,dist/img001.png,ref/r01.png,white_noise,3,41.5,MOS
    ...

Paths are relative to the manifest file.  ``reference`` may be empty for
reference-free (authentic distortion) entries.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field, replace

from ..errors import DomainError, LoadError

HEADER = ("id", "distorted", "reference", "type", "level", "score", "score_kind")
RANGE_TAG = "#score_range"
SCORE_KINDS = ("MOS", "DMOS")


@dataclass(frozen=True)
class Entry:
    id: str
    distorted: str
    reference: str | None
    distortion_type: str
    level: int
    score: float
    score_kind: str = "MOS"

    @property
    def reference_id(self) -> str:
        """Identity used to keep content out of both sides of a split."""
        return self.reference if self.reference else self.id


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[Entry, ...]
    score_range: tuple[float, float] = (0.0, 100.0)
    root: str = field(default=".", compare=False)

    def path(self, relative: str) -> str:
        return os.path.normpath(os.path.join(self.root, relative))

    def distorted_path(self, entry: Entry) -> str:
        return self.path(entry.distorted)

    def reference_path(self, entry: Entry) -> str | None:
        return self.path(entry.reference) if entry.reference else None

    def __len__(self) -> int:
        return len(self.entries)

    def by_id(self) -> dict[str, Entry]:
        return {e.id: e for e in self.entries}

    def scores(self) -> list[float]:
        return [e.score for e in self.entries]

    def subset(self, ids) -> "DatasetManifest":
        keep = set(ids)
        return replace(self, entries=tuple(e for e in self.entries if e.id in keep))


def parse_manifest(text: str, root: str = ".", source: str = "<manifest>",
                   check_files: bool = True) -> DatasetManifest:
    lines = text.splitlines()
    if not lines:
        raise LoadError(f"{source}: empty manifest (missing {RANGE_TAG} row)")
    rows = list(csv.reader(lines))
    first = rows[0]
    if not first or first[0].strip() != RANGE_TAG or len(first) != 3:
        raise LoadError(f"{source}:1: expected '{RANGE_TAG},<lo>,<hi>'")
    try:
        lo, hi = float(first[1]), float(first[2])
    except ValueError:
        raise LoadError(f"{source}:1: score range must be numeric") from None
    if len(rows) < 2 or tuple(c.strip() for c in rows[1]) != HEADER:
        raise LoadError(f"{source}:2: expected header {','.join(HEADER)}")

    entries = []
    seen = set()
    for lineno, row in enumerate(rows[2:], start=3):
        if not row or all(not c.strip() for c in row):
            continue
        where = f"{source}:{lineno}"
        if len(row) != len(HEADER):
            raise LoadError(f"{where}: expected {len(HEADER)} fields, got {len(row)}")
        eid, dist, ref, dtype, level, score, kind = (c.strip() for c in row)
        if not eid:
            raise LoadError(f"{where}: empty id")
        if eid in seen:
            raise LoadError(f"{where}: duplicate id {eid!r}")
        seen.add(eid)
        try:
            level_i = int(level) if level else 0
            score_f = float(score)
        except ValueError:
            raise LoadError(f"{where}: level/score must be numeric") from None
        if not lo <= score_f <= hi:
            raise LoadError(f"{where}: score {score_f} outside declared range [{lo}, {hi}]")
        kind = kind.upper() or "MOS"
        if kind not in SCORE_KINDS:
            raise LoadError(f"{where}: score_kind must be MOS or DMOS, got {kind!r}")
        if check_files:
            for rel in (dist, ref):
                if rel and not os.path.isfile(os.path.join(root, rel)):
                    raise LoadError(f"{where}: missing file {rel!r}")
        entries.append(Entry(eid, dist, ref or None, dtype, level_i, score_f, kind))
    return DatasetManifest(tuple(entries), (lo, hi), root)


def load_manifest(path: str | os.PathLike, check_files: bool = True) -> DatasetManifest:
    path = os.fspath(path)
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            text = fh.read()
    except OSError as exc:
        raise LoadError(f"{path}: cannot read manifest ({exc.strerror})") from exc
    root = os.path.dirname(os.path.abspath(path))
    return parse_manifest(text, root, path, check_files)


def format_manifest(m: DatasetManifest, root: str | None = None) -> str:
    """CSV text with paths rewritten relative to ``root`` (default: ``m.root``)."""
    root = m.root if root is None else root

    def rel(p):
        if not p:
            return ""
        return os.path.relpath(m.path(p), root).replace(os.sep, "/")

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([RANGE_TAG, repr(float(m.score_range[0])), repr(float(m.score_range[1]))])
    w.writerow(HEADER)
    for e in m.entries:
        w.writerow([e.id, rel(e.distorted), rel(e.reference), e.distortion_type, e.level,
                    repr(float(e.score)), e.score_kind])
    return buf.getvalue()


def save_manifest(m: DatasetManifest, path: str | os.PathLike) -> None:
    path = os.fspath(path)
    root = os.path.dirname(os.path.abspath(path))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_manifest(m, root))


def normalize_scores(m: DatasetManifest) -> DatasetManifest:
    """Map scores affinely from the declared range onto [0, 100]."""
    lo, hi = m.score_range
    if hi == lo:
        raise DomainError("cannot normalize a degenerate score range")
    if (lo, hi) == (0.0, 100.0):
        return m
    entries = tuple(replace(e, score=100.0 * (e.score - lo) / (hi - lo)) for e in m.entries)
    return replace(m, entries=entries, score_range=(0.0, 100.0))
