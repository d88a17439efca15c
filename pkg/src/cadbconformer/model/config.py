"""Architectural hyperparameters and ablation toggles."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

ABLATIONS = ("full", "no_cfb", "no_t_conformer", "no_f_conformer", "no_bfb")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    channels: int = 64
    num_blocks: int = 4
    dense_depth: int = 4
    dilations: tuple = (1, 2, 4, 8)
    attention_heads: int = 4
    conformer_kernel: int = 15
    ffn_mult: int = 4
    alpha: float = 0.5
    beta: float = 0.5
    enable_cfb: bool = True
    enable_t_conformer: bool = True
    enable_f_conformer: bool = True
    f_bins: int = 201
    compress_exponent: float = 0.3

    def __post_init__(self):
        object.__setattr__(self, "dilations", tuple(int(d) for d in self.dilations))
        if self.channels < 1 or self.num_blocks < 0 or self.dense_depth < 1:
            raise ConfigError("channels and dense_depth must be >= 1, num_blocks >= 0")
        if len(self.dilations) != self.dense_depth:
            raise ConfigError(f"{len(self.dilations)} dilations given for dense_depth={self.dense_depth}")
        if any(d < 1 for d in self.dilations):
            raise ConfigError(f"dilations must be >= 1, got {self.dilations}")
        if self.channels % self.attention_heads:
            raise ConfigError(f"channels ({self.channels}) must be divisible by attention_heads ({self.attention_heads})")
        if self.conformer_kernel < 1 or self.conformer_kernel % 2 == 0:
            raise ConfigError(f"conformer_kernel must be odd, got {self.conformer_kernel}")
        if not (0.0 <= self.alpha <= 1.0 and 0.0 <= self.beta <= 1.0):
            raise ConfigError(f"alpha and beta must lie in [0, 1], got {self.alpha}, {self.beta}")
        if self.f_bins < 3 or self.f_bins % 2 == 0:
            raise ConfigError(f"f_bins must be odd so that 2*ceil(F/2)-1 == F, got {self.f_bins}")
        if not 0 < self.compress_exponent <= 1:
            raise ConfigError(f"compress_exponent must lie in (0, 1], got {self.compress_exponent}")
        if not (self.enable_cfb or self.enable_t_conformer or self.enable_f_conformer):
            raise ConfigError("every branch is disabled; at least one of CFB, T-conformer, F-conformer is required")

    @property
    def f_half(self) -> int:
        return math.ceil(self.f_bins / 2)

    @property
    def ablation(self) -> str:
        flags = (self.enable_cfb, self.enable_t_conformer, self.enable_f_conformer)
        return {
            (True, True, True): "full",
            (False, True, True): "no_cfb",
            (True, False, True): "no_t_conformer",
            (True, True, False): "no_f_conformer",
            (True, False, False): "no_bfb",
        }.get(flags, "custom")

    def with_ablation(self, name: str) -> "ModelConfig":
        toggles = {
            "full": (True, True, True),
            "no_cfb": (False, True, True),
            "no_t_conformer": (True, False, True),
            "no_f_conformer": (True, True, False),
            "no_bfb": (True, False, False),
        }
        if name not in toggles:
            raise ConfigError(f"unknown ablation {name!r}; choose from {ABLATIONS}")
        cfb, t, f = toggles[name]
        return replace(self, enable_cfb=cfb, enable_t_conformer=t, enable_f_conformer=f)
