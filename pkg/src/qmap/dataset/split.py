from __future__ import annotations

from dataclasses import dataclass

from ..errors import DomainError, SplitError
from ..nn.rng import substream
from .manifest import DatasetManifest


@dataclass(frozen=True)
class SplitSpec:
    """Reference-disjoint random partition of a manifest."""

    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise DomainError("train_fraction must lie in (0, 1)")


def split_references(refs: list[str], spec: SplitSpec) -> tuple[list[str], list[str]]:
    refs = sorted(set(refs))
    if len(refs) < 2:
        raise SplitError(f"need at least 2 reference images to split, got {len(refs)}")
    order = substream(spec.seed, "split").permutation(len(refs))
    n_train = min(max(int(round(spec.train_fraction * len(refs))), 1), len(refs) - 1)
    shuffled = [refs[i] for i in order]
    return sorted(shuffled[:n_train]), sorted(shuffled[n_train:])


def split(m: DatasetManifest, spec: SplitSpec | None = None) -> tuple[DatasetManifest, DatasetManifest]:
    """Partition by reference identity so no test content appears in training."""
    spec = spec or SplitSpec()
    train_refs, _ = split_references([e.reference_id for e in m.entries], spec)
    train_set = set(train_refs)
    train_ids = [e.id for e in m.entries if e.reference_id in train_set]
    test_ids = [e.id for e in m.entries if e.reference_id not in train_set]
    return m.subset(train_ids), m.subset(test_ids)
