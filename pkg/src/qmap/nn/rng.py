"""Named, reproducible random substreams derived from one integer seed."""

from __future__ import annotations

import zlib

import numpy as np


def _key(name: str | int) -> int:
    if isinstance(name, (int, np.integer)):
        return int(name) & 0xFFFFFFFF
    return zlib.crc32(str(name).encode("utf-8"))


def substream(seed: int, *names: str | int) -> np.random.Generator:
    """Generator for the stream ``seed / names[0] / names[1] ...``.

    The same path always yields the same sequence, independent of which other
    streams were drawn from first.
    """
    entropy = [int(seed) & 0xFFFFFFFF, (int(seed) >> 32) & 0xFFFFFFFF]
    entropy.extend(_key(n) for n in names)
    return np.random.default_rng(np.random.SeedSequence(entropy))


class SeedStreams:
    """Factory for the substreams of one run (``init``, ``dropout``, ``shuffle``...)."""

    def __init__(self, seed: int):
        self.seed = int(seed)

    def stream(self, *names: str | int) -> np.random.Generator:
        return substream(self.seed, *names)

    def child_seed(self, *names: str | int) -> int:
        return int(self.stream(*names).integers(0, 2**31 - 1))

    def __repr__(self) -> str:
        return f"SeedStreams({self.seed})"


def seed_rng(seed: int) -> SeedStreams:
    return SeedStreams(seed)
