"""Pooling networks that regress quality maps (or raw patches) to scores."""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import DomainError, ShapeError
from ..maps.config import FrMethod
from ..nn import ComputeGraph, GraphBuilder, forward, substream


class PoolKind(str, enum.Enum):
    DPN = "dpn"
    FC2 = "fc2"
    DPN_DIRECT = "dpn_direct"

    @classmethod
    def parse(cls, token) -> "PoolKind":
        if isinstance(token, PoolKind):
            return token
        try:
            return cls(str(token).strip().lower())
        except ValueError:
            raise DomainError(f"unknown pooler kind {token!r}") from None


@dataclass(frozen=True)
class PoolNetSpec:
    """``input_channels`` is per stream; ``streams > 1`` builds one conv trunk per map."""

    kind: PoolKind = PoolKind.DPN
    input_channels: int = 1
    input_size: int = 144
    conv_channels: tuple[int, ...] = (32, 64, 128, 128, 128)
    fc_units: int = 512
    fc2_units: int = 1024
    dropout_p: float = 0.5
    streams: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kind", PoolKind.parse(self.kind))
        object.__setattr__(self, "conv_channels", tuple(int(c) for c in self.conv_channels))
        if len(self.conv_channels) != 5:
            raise DomainError("the pooling trunk has exactly five conv stages")
        if self.input_channels <= 0 or self.streams <= 0:
            raise DomainError("channel and stream counts must be positive")
        if not 0.0 <= self.dropout_p < 1.0:
            raise DomainError("dropout probability must lie in [0, 1)")
        if self.kind is PoolKind.FC2 and self.streams != 1:
            raise DomainError("FC2 has no conv trunk to split into streams")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        return d


@dataclass(frozen=True)
class FusionMode:
    """How several maps reach the pooler: stacked as channels or one trunk each."""

    tag: str = "single_stream"
    map_methods: tuple[FrMethod, ...] = field(default_factory=lambda: (FrMethod.FSIM_GM,))

    def __post_init__(self):
        tag = {"single": "single_stream", "multi": "multi_stream"}.get(self.tag, self.tag)
        if tag not in ("single_stream", "multi_stream"):
            raise DomainError(f"unknown fusion mode {self.tag!r}")
        object.__setattr__(self, "tag", tag)
        object.__setattr__(self, "map_methods", tuple(FrMethod.parse(m) for m in self.map_methods))
        if not self.map_methods:
            raise DomainError("fusion needs at least one map method")

    def pooler_spec(self, **kwargs) -> PoolNetSpec:
        k = len(self.map_methods)
        if self.tag == "multi_stream":
            return PoolNetSpec(input_channels=1, streams=k, **kwargs)
        return PoolNetSpec(input_channels=k, streams=1, **kwargs)

    def to_dict(self) -> dict:
        return {"tag": self.tag, "map_methods": [m.value for m in self.map_methods]}


def _trunk(b: GraphBuilder, x: str, spec: PoolNetSpec, prefix: str) -> str:
    for i, ch in enumerate(spec.conv_channels, start=1):
        x = b.conv3x3(x, ch, name=f"{prefix}conv{i}")
        x = b.batch_norm(x, name=f"{prefix}bn{i}")
        x = b.leaky_relu(x, name=f"{prefix}act{i}")
        x = b.max_pool(x, name=f"{prefix}pool{i}")
    return x


def build_pooler(spec: PoolNetSpec | None = None, seed: int = 0, dtype: str = "float32") -> ComputeGraph:
    """Graph mapping ``(N, C, S, S)`` maps to one score per sample.

    The raw output is an affine-normalized score; ``meta['score_offset']``
    and ``meta['score_scale']`` convert it back (set by training).
    """
    spec = spec or PoolNetSpec()
    if spec.kind is not PoolKind.FC2 and spec.input_size // 2 ** 5 < 1:
        raise ShapeError(f"input size {spec.input_size} does not survive five 2x2 poolings")
    b = GraphBuilder(substream(seed, "init", "pooler"), dtype)
    s = spec.input_size
    if spec.kind is PoolKind.FC2:
        x = b.input("map", spec.input_channels, s, s)
        x = b.fully_connected(x, spec.fc2_units, name="fc1")
        x = b.leaky_relu(x, name="fc1_act")
        x = b.dropout(x, spec.dropout_p, name="fc1_drop")
        x = b.fully_connected(x, spec.fc2_units, name="fc2")
        x = b.leaky_relu(x, name="fc2_act")
        x = b.dropout(x, spec.dropout_p, name="fc2_drop")
        out = b.fully_connected(x, 1, name="score")
    else:
        if spec.streams == 1:
            x = _trunk(b, b.input("map", spec.input_channels, s, s), spec, "")
        else:
            feats = [
                _trunk(b, b.input(f"map{k}", spec.input_channels, s, s), spec, f"s{k}_")
                for k in range(spec.streams)
            ]
            x = b.concat(feats, name="stream_concat")
        x = b.fully_connected(x, spec.fc_units, name="fc1")
        x = b.leaky_relu(x, name="fc1_act")
        x = b.dropout(x, spec.dropout_p, name="fc1_drop")
        out = b.fully_connected(x, 1, name="score")
    meta = {"role": "pooler", "spec": spec.to_dict(), "score_offset": 0.0, "score_scale": 1.0, "seed": seed}
    return b.build(out, meta)


def pooler_inputs(graph: ComputeGraph, x: np.ndarray):
    """Split an ``(N, C, H, W)`` stack into per-stream inputs when needed."""
    names = list(graph.inputs)
    if len(names) == 1:
        return x
    per = graph.inputs[names[0]]
    if x.shape[1] != per * len(names):
        raise ShapeError(f"expected {per * len(names)} stacked channels, got {x.shape[1]}")
    return {name: x[:, k * per:(k + 1) * per] for k, name in enumerate(names)}


def pooler_scores(graph: ComputeGraph, x: np.ndarray, batch_size: int = 32) -> np.ndarray:
    """Eval-mode scores in the original score units for an ``(N, C, H, W)`` stack."""
    x = np.asarray(x)
    raw = []
    for start in range(0, len(x), batch_size):
        y, _ = forward(graph, pooler_inputs(graph, x[start:start + batch_size]), mode="eval")
        raw.append(y.reshape(-1).astype(np.float64))
    raw = np.concatenate(raw) if raw else np.zeros(0)
    return graph.meta.get("score_offset", 0.0) + graph.meta.get("score_scale", 1.0) * raw
