"""U-Net quality-map generator."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import DomainError, ShapeError
from ..nn import ComputeGraph, GraphBuilder, forward, substream


@dataclass(frozen=True)
class UNetSpec:
    depth: int = 4
    stage_channels: tuple[int, ...] = (32, 64, 128, 256)
    input_channels: int = 3
    output_channels: int = 1

    def __post_init__(self):
        object.__setattr__(self, "stage_channels", tuple(int(c) for c in self.stage_channels))
        if self.depth != len(self.stage_channels):
            raise DomainError("depth must equal the number of stage channel counts")
        if min(self.stage_channels) <= 0 or self.input_channels <= 0 or self.output_channels <= 0:
            raise DomainError("channel counts must be positive")

    @property
    def multiple(self) -> int:
        return 2 ** self.depth


def build_generator(spec: UNetSpec | None = None, seed: int = 0, dtype: str = "float32") -> ComputeGraph:
    """Subsampling path of conv-BN-LReLU-maxpool stages, mirrored by
    deconv-BN-LReLU, skip concatenation and a conv-BN-LReLU merge; a final
    3x3 conv gives one logit channel squashed by a sigmoid.
    """
    spec = spec or UNetSpec()
    b = GraphBuilder(substream(seed, "init", "generator"), dtype)
    x = b.input("image", spec.input_channels)
    skips = []
    for i, ch in enumerate(spec.stage_channels, start=1):
        x = b.conv3x3(x, ch, name=f"sp{i}_conv")
        x = b.batch_norm(x, name=f"sp{i}_bn")
        x = b.leaky_relu(x, name=f"sp{i}_act")
        skips.append(x)
        x = b.max_pool(x, name=f"sp{i}_pool")
    for i in range(spec.depth, 0, -1):
        ch = spec.stage_channels[i - 1]
        x = b.deconv2x2(x, ch, name=f"up{i}_deconv")
        x = b.batch_norm(x, name=f"up{i}_deconv_bn")
        x = b.leaky_relu(x, name=f"up{i}_deconv_act")
        x = b.concat([x, skips[i - 1]], name=f"up{i}_concat")
        x = b.conv3x3(x, ch, name=f"up{i}_conv")
        x = b.batch_norm(x, name=f"up{i}_bn")
        x = b.leaky_relu(x, name=f"up{i}_act")
    logits = b.conv3x3(x, spec.output_channels, name="head_logits")
    out = b.sigmoid(logits, name="quality_map")
    meta = {"role": "generator", "spec": asdict(spec), "logits": logits, "seed": seed}
    return b.build(out, meta)


def check_generator_input(graph: ComputeGraph, shape: tuple[int, ...]) -> None:
    multiple = 2 ** int(graph.meta.get("spec", {}).get("depth", 4))
    h, w = shape[-2:]
    if h % multiple or w % multiple or h == 0 or w == 0:
        raise ShapeError(f"generator input {h}x{w} must be a positive multiple of {multiple} per side")


def predict_maps(graph: ComputeGraph, images: np.ndarray, batch_size: int = 8) -> np.ndarray:
    """Eval-mode maps for a stack of ``(N, H, W, C)`` images -> ``(N, H, W)``."""
    images = np.asarray(images)
    x = images.transpose(0, 3, 1, 2)
    check_generator_input(graph, x.shape)
    out = []
    for start in range(0, len(x), batch_size):
        y, _ = forward(graph, x[start:start + batch_size], mode="eval")
        out.append(y[:, 0].astype(np.float64))
    return np.concatenate(out, axis=0) if out else np.zeros((0,) + images.shape[1:3])
