"""Two-stage training: generator on map labels, then pooler on scores."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import DomainError, NumericError, ShapeError, StateError
from ..nn import (
    AdamState,
    ComputeGraph,
    adam_step,
    backward,
    commit_buffers,
    forward,
    loss_bce_sigmoid,
    loss_mse,
    seed_rng,
)
from .generator import check_generator_input, predict_maps
from .pooler import FusionMode, pooler_inputs

log = logging.getLogger(__name__)

GENERATOR_LR = 1e-3
POOLER_LR = 5e-3
WEIGHT_DECAY = 1e-11


@dataclass
class TrainHistory:
    """Per-epoch losses.

    ``monitor_loss[0]`` is the untrained model; ``monitor_loss[e]`` the model
    after epoch ``e``, both in eval mode on the monitoring set (validation
    data when given, otherwise the training data).  ``train_loss[e - 1]`` is
    the mean train-mode batch loss during epoch ``e``.
    """

    train_loss: list[float] = field(default_factory=list)
    monitor_loss: list[float] = field(default_factory=list)
    best_epoch: int = 0

    @property
    def best_loss(self) -> float:
        return self.monitor_loss[self.best_epoch]

    def to_dict(self) -> dict:
        return {
            "train_loss": self.train_loss,
            "monitor_loss": self.monitor_loss,
            "best_epoch": self.best_epoch,
        }


def _snapshot(graph: ComputeGraph):
    return (
        {n: {k: v.copy() for k, v in g.items()} for n, g in graph.params.items()},
        {n: {k: v.copy() for k, v in g.items()} for n, g in graph.buffers.items()},
    )


def _batches(n: int, batch_size: int, order: np.ndarray):
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def _flip_mask(rng: np.random.Generator, n: int, enabled: bool) -> np.ndarray:
    mask = rng.random(n) < 0.5
    return mask if enabled else np.zeros(n, dtype=bool)


def _check_finite(loss: float, what: str, epoch: int) -> None:
    if not np.isfinite(loss):
        raise NumericError(f"{what} loss became non-finite in epoch {epoch}")


def _generator_loss(gen: ComputeGraph, x: np.ndarray, y: np.ndarray, batch_size: int) -> float:
    total = 0.0
    logits_name = gen.meta["logits"]
    for start in range(0, len(x), batch_size):
        z, _ = forward(gen, x[start:start + batch_size], mode="eval", output=logits_name)
        loss, _ = loss_bce_sigmoid(z, y[start:start + batch_size])
        total += loss * z.size
    return total / y.size


def train_generator(
    gen: ComputeGraph,
    images,
    labels,
    epochs: int,
    lr: float = GENERATOR_LR,
    seed: int = 0,
    batch_size: int = 8,
    val: tuple | None = None,
    hflip: bool = True,
    weight_decay: float = WEIGHT_DECAY,
) -> tuple[ComputeGraph, TrainHistory]:
    """Fit the generator's sigmoid output to map labels with BCE and Adam.

    ``images`` is ``(N, H, W, C)`` in [0, 1] and ``labels`` is ``(N, H, W)``
    in [0, 1], spatially aligned.  Returns a new graph holding the parameters
    of the epoch with the lowest monitoring loss.
    """
    if gen.frozen:
        raise StateError("cannot train a frozen generator")
    x_all, y_all = _generator_arrays(gen, images, labels)
    if val is not None:
        x_mon, y_mon = _generator_arrays(gen, *val)
    else:
        x_mon, y_mon = x_all, y_all

    gen = gen.copy()
    streams = seed_rng(seed)
    state = AdamState()
    logits_name = gen.meta["logits"]
    history = TrainHistory()
    history.monitor_loss.append(_generator_loss(gen, x_mon, y_mon, batch_size))
    best = _snapshot(gen)
    n = len(x_all)
    for epoch in range(1, epochs + 1):
        order = streams.stream("shuffle", "generator", epoch).permutation(n)
        flips = _flip_mask(streams.stream("flip", "generator", epoch), n, hflip)
        losses = []
        for b, idx in enumerate(_batches(n, batch_size, order)):
            xb = x_all[idx].copy()
            yb = y_all[idx].copy()
            f = flips[idx]
            xb[f] = xb[f][..., ::-1]
            yb[f] = yb[f][..., ::-1]
            z, tape = forward(gen, xb, mode="train", rng_seed=streams.child_seed("dropout", epoch, b),
                              output=logits_name)
            loss, grad = loss_bce_sigmoid(z, yb)
            _check_finite(loss, "generator", epoch)
            grads = backward(gen, tape, grad)
            gen.params, state = adam_step(gen.params, grads.params, state, lr, weight_decay=weight_decay)
            commit_buffers(gen, tape)
            losses.append(loss)
        history.train_loss.append(float(np.mean(losses)))
        mon = _generator_loss(gen, x_mon, y_mon, batch_size)
        _check_finite(mon, "generator monitoring", epoch)
        history.monitor_loss.append(mon)
        if history.best_epoch == 0 or mon < history.monitor_loss[history.best_epoch]:
            history.best_epoch = epoch
            best = _snapshot(gen)
        log.info("generator epoch %d: train %.5f monitor %.5f", epoch, history.train_loss[-1], mon)
    gen.params, gen.buffers = best
    gen.meta = dict(gen.meta, trained_epochs=epochs, best_epoch=history.best_epoch)
    return gen, history


def _generator_arrays(gen, images, labels):
    x = np.asarray(images, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if x.ndim != 4:
        raise ShapeError(f"images must be (N, H, W, C), got {x.shape}")
    if y.ndim == 4 and y.shape[-1] == 1:
        y = y[..., 0]
    if y.shape != x.shape[:3]:
        raise ShapeError(f"labels {y.shape} are not aligned with images {x.shape[:3]}")
    if y.size and (y.min() < 0.0 or y.max() > 1.0):
        raise DomainError("map labels must lie in [0, 1]")
    x = x.transpose(0, 3, 1, 2).astype(gen.dtype)
    check_generator_input(gen, x.shape)
    return x, y[:, None].astype(gen.dtype)


def _as_generators(frozen_gen, fusion: FusionMode | None) -> list[ComputeGraph]:
    if frozen_gen is None:
        return []
    gens = [frozen_gen] if isinstance(frozen_gen, ComputeGraph) else list(frozen_gen)
    if fusion is not None and len(gens) != len(fusion.map_methods):
        raise ShapeError(f"fusion expects {len(fusion.map_methods)} generators, got {len(gens)}")
    return gens


def pooler_features(inputs, frozen_gen=None, fusion: FusionMode | None = None,
                    batch_size: int = 8) -> np.ndarray:
    """Turn a batch of patches into the ``(N, C, H, W)`` stack the pooler sees.

    With generators, ``inputs`` are RGB patches and each generator contributes
    one predicted-map channel.  Without, ``inputs`` are already maps
    (``(N, H, W)`` or ``(N, H, W, k)``) or raw patches.
    """
    gens = _as_generators(frozen_gen, fusion)
    x = np.asarray(inputs, dtype=np.float64)
    if gens:
        maps = [predict_maps(g, x, batch_size=batch_size) for g in gens]
        return np.stack(maps, axis=1)
    if x.ndim == 3:
        return x[:, None]
    if x.ndim == 4:
        return x.transpose(0, 3, 1, 2)
    raise ShapeError(f"cannot interpret pooler inputs of shape {x.shape}")


def _pooler_loss(pool, x, z, batch_size) -> float:
    total = 0.0
    for start in range(0, len(x), batch_size):
        y, _ = forward(pool, pooler_inputs(pool, x[start:start + batch_size]), mode="eval")
        loss, _ = loss_mse(y.reshape(-1, 1), z[start:start + batch_size])
        total += loss * len(y)
    return total / len(x)


def _check_scores(scores) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    if s.size and (not np.all(np.isfinite(s)) or s.min() < 0.0 or s.max() > 100.0):
        raise DomainError("scores must lie in [0, 100]")
    return s


def train_pooler(
    pool: ComputeGraph,
    inputs,
    scores: Sequence[float],
    epochs: int,
    lr: float = POOLER_LR,
    seed: int = 0,
    frozen_gen=None,
    fusion: FusionMode | None = None,
    batch_size: int = 8,
    val: tuple | None = None,
    hflip: bool = True,
    weight_decay: float = WEIGHT_DECAY,
) -> tuple[ComputeGraph, TrainHistory]:
    """Regress patch scores with a squared-error loss; only the pooler learns.

    Inputs come from one of three sources: RGB patches passed through frozen
    generator(s), ground-truth maps, or raw patches (no generator).  Scores
    are standardized internally; the returned graph's ``meta`` stores the
    offset and scale that map its raw output back to score units.
    """
    if pool.frozen:
        raise StateError("cannot train a frozen pooler")
    gens = _as_generators(frozen_gen, fusion)
    checksums = [g.checksum() for g in gens]

    s = _check_scores(scores)
    x_all = pooler_features(inputs, gens, fusion).astype(pool.dtype)
    if len(x_all) != len(s):
        raise ShapeError(f"{len(x_all)} inputs but {len(s)} scores")
    offset = float(s.mean())
    scale = float(s.std()) or 1.0
    z_all = ((s - offset) / scale)[:, None]
    if val is not None:
        s_val = _check_scores(val[1])
        x_mon = pooler_features(val[0], gens, fusion).astype(pool.dtype)
        z_mon = ((s_val - offset) / scale)[:, None]
    else:
        x_mon, z_mon = x_all, z_all

    pool = pool.copy()
    pool.meta = dict(pool.meta, score_offset=offset, score_scale=scale)
    streams = seed_rng(seed)
    state = AdamState()
    history = TrainHistory()
    history.monitor_loss.append(_pooler_loss(pool, x_mon, z_mon, batch_size) * scale ** 2)
    best = _snapshot(pool)
    n = len(x_all)
    for epoch in range(1, epochs + 1):
        order = streams.stream("shuffle", "pooler", epoch).permutation(n)
        flips = _flip_mask(streams.stream("flip", "pooler", epoch), n, hflip)
        losses = []
        for b, idx in enumerate(_batches(n, batch_size, order)):
            xb = x_all[idx].copy()
            f = flips[idx]
            xb[f] = xb[f][..., ::-1]
            y, tape = forward(pool, pooler_inputs(pool, xb), mode="train",
                              rng_seed=streams.child_seed("dropout", epoch, b))
            loss, grad = loss_mse(y.reshape(-1, 1), z_all[idx])
            _check_finite(loss, "pooler", epoch)
            grads = backward(pool, tape, grad.reshape(y.shape))
            pool.params, state = adam_step(pool.params, grads.params, state, lr, weight_decay=weight_decay)
            commit_buffers(pool, tape)
            losses.append(loss * scale ** 2)
        history.train_loss.append(float(np.mean(losses)))
        mon = _pooler_loss(pool, x_mon, z_mon, batch_size) * scale ** 2
        _check_finite(mon, "pooler monitoring", epoch)
        history.monitor_loss.append(mon)
        if history.best_epoch == 0 or mon < history.monitor_loss[history.best_epoch]:
            history.best_epoch = epoch
            best = _snapshot(pool)
        log.info("pooler epoch %d: train %.4f monitor %.4f", epoch, history.train_loss[-1], mon)
    pool.params, pool.buffers = best
    pool.meta = dict(pool.meta, trained_epochs=epochs, best_epoch=history.best_epoch)

    if [g.checksum() for g in gens] != checksums:
        raise StateError("frozen generator parameters changed during pooler training")
    return pool, history
