"""Map generator selection and tunable constants."""

from __future__ import annotations

import enum
import os
from dataclasses import asdict, dataclass, fields, replace

from ..errors import DomainError, LoadError


class FrMethod(str, enum.Enum):
    """Full-reference similarity maps that can serve as generator labels."""

    SSIM = "ssim"
    FSIM_GM = "fsim_gm"
    FSIM_PC = "fsim_pc"
    MDSI_GC = "mdsi_gc"

    @classmethod
    def parse(cls, token: "str | FrMethod") -> "FrMethod":
        if isinstance(token, FrMethod):
            return token
        try:
            return cls(token.strip().lower())
        except ValueError:
            names = ", ".join(m.value for m in cls)
            raise DomainError(f"unknown map method {token!r} (expected one of {names})") from None

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class MapConfig:
    """Constants of the map generators, on the [0, 255] intensity scale."""

    ssim_k1: float = 0.01
    ssim_k2: float = 0.03
    dynamic_range: float = 255.0
    gaussian_size: int = 11
    gaussian_sigma: float = 1.5
    fsim_t2: float = 160.0
    pc_scales: int = 4
    pc_orientations: int = 4
    pc_t1: float = 0.85
    mdsi_c1: float = 140.0
    mdsi_c2: float = 55.0
    mdsi_c3: float = 550.0
    mdsi_alpha: float = 0.6
    deviation_q: float = 0.25

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "mdsi_alpha":
                if not 0.0 <= value <= 1.0:
                    raise DomainError("mdsi_alpha must lie in [0, 1]")
            elif value <= 0:
                raise DomainError(f"{f.name} must be strictly positive, got {value}")
        if self.gaussian_size % 2 != 1:
            raise DomainError("gaussian_size must be odd")

    @property
    def ssim_border(self) -> int:
        return self.gaussian_size // 2

    def to_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in asdict(self).items())

    @classmethod
    def from_mapping(cls, values: dict) -> "MapConfig":
        known = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in known:
                raise LoadError(f"unknown map config key {key!r}")
            caster = int if key in ("gaussian_size", "pc_scales", "pc_orientations") else float
            try:
                kwargs[key] = caster(raw)
            except ValueError as exc:
                raise LoadError(f"bad value for {key}: {raw!r}") from exc
        return replace(cls(), **kwargs)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "MapConfig":
        from ..config import read_key_values

        return cls.from_mapping(read_key_values(path))
