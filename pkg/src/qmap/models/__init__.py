"""Generator and pooling networks, their training loops and image scoring."""

from .generator import UNetSpec, build_generator, check_generator_input, predict_maps
from .pooler import FusionMode, PoolKind, PoolNetSpec, build_pooler, pooler_inputs, pooler_scores
from .predict import predict_score
from .training import TrainHistory, pooler_features, train_generator, train_pooler

__all__ = [
    "FusionMode",
    "PoolKind",
    "PoolNetSpec",
    "TrainHistory",
    "UNetSpec",
    "build_generator",
    "build_pooler",
    "check_generator_input",
    "pooler_features",
    "pooler_inputs",
    "pooler_scores",
    "predict_maps",
    "predict_score",
    "train_generator",
    "train_pooler",
]
