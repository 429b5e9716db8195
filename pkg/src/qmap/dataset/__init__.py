"""Manifests, splits, synthetic distortions and label stores."""

from .labels import LabelRow, LabelStore, load_labels, materialize_labels, patch_arrays
from .manifest import DatasetManifest, Entry, load_manifest, normalize_scores, parse_manifest, save_manifest
from .split import SplitSpec, split, split_references
from .synth import (
    KINDS,
    DistortionRecipe,
    default_recipes,
    distort,
    jpeg_blocking,
    load_pair,
    procedural_base,
    pseudo_score,
    synthesize,
)

__all__ = [
    "DatasetManifest",
    "DistortionRecipe",
    "Entry",
    "KINDS",
    "LabelRow",
    "LabelStore",
    "SplitSpec",
    "default_recipes",
    "distort",
    "jpeg_blocking",
    "load_labels",
    "load_manifest",
    "load_pair",
    "materialize_labels",
    "normalize_scores",
    "parse_manifest",
    "patch_arrays",
    "procedural_base",
    "pseudo_score",
    "save_manifest",
    "split",
    "split_references",
    "synthesize",
]
