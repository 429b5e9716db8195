"""Minimal reverse-mode kernels, graphs, losses and Adam for the two networks."""

from .checkpoint import load_checkpoint, loads_checkpoint, dumps_checkpoint, save_checkpoint
from .graph import (
    ComputeGraph,
    Gradients,
    GraphBuilder,
    Node,
    Tape,
    backward,
    commit_buffers,
    forward,
)
from .layers import KINDS
from .losses import loss_bce_sigmoid, loss_mse
from .optim import AdamState, adam_step
from .rng import SeedStreams, seed_rng, substream

__all__ = [
    "AdamState",
    "ComputeGraph",
    "Gradients",
    "GraphBuilder",
    "KINDS",
    "Node",
    "SeedStreams",
    "Tape",
    "adam_step",
    "backward",
    "commit_buffers",
    "dumps_checkpoint",
    "forward",
    "load_checkpoint",
    "loads_checkpoint",
    "loss_bce_sigmoid",
    "loss_mse",
    "save_checkpoint",
    "seed_rng",
    "substream",
]
