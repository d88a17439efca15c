"""Parameter layout, counting and initialization.

The layout is derived from :class:`ModelConfig` alone, so the parameter
count and the checkpoint manifest are pure functions of the config.
"""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from ..numerics import Tensor
from .config import ModelConfig


@dataclass(frozen=True)
class ParamSpec:
    name: str
    shape: tuple
    init: str  # "kaiming", "zeros", "ones", "prelu"
    fan_in: int = 0

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


def _conv(prefix, co, ci, kh, kw):
    return [ParamSpec(f"{prefix}.weight", (co, ci, kh, kw), "kaiming", ci * kh * kw),
            ParamSpec(f"{prefix}.bias", (co,), "zeros")]


def _conv_transpose(prefix, ci, co, kh, kw):
    return [ParamSpec(f"{prefix}.weight", (ci, co, kh, kw), "kaiming", co * kh * kw),
            ParamSpec(f"{prefix}.bias", (co,), "zeros")]


def _linear(prefix, out, inp):
    return [ParamSpec(f"{prefix}.weight", (out, inp), "kaiming", inp),
            ParamSpec(f"{prefix}.bias", (out,), "zeros")]


def _depthwise(prefix, c, k):
    return [ParamSpec(f"{prefix}.weight", (c, k), "kaiming", k),
            ParamSpec(f"{prefix}.bias", (c,), "zeros")]


def _norm(prefix, c):
    return [ParamSpec(f"{prefix}.gain", (c,), "ones"), ParamSpec(f"{prefix}.bias", (c,), "zeros")]


def _prelu(prefix, c):
    return [ParamSpec(f"{prefix}.slope", (c,), "prelu")]


def _dense(prefix, cfg: ModelConfig):
    c = cfg.channels
    specs = []
    for i in range(cfg.dense_depth):
        specs += _conv(f"{prefix}.dense.{i}.conv", c, c * (i + 1), 2, 3)
        specs += _norm(f"{prefix}.dense.{i}.norm", c)
        specs += _prelu(f"{prefix}.dense.{i}.prelu", c)
    return specs


def _conv_forward(prefix, c):
    return (_linear(f"{prefix}.pw1", 2 * c, c) + _depthwise(f"{prefix}.dw", 2 * c, 3)
            + _linear(f"{prefix}.pw2", c, 2 * c))


def _feed_forward(prefix, c, hidden):
    return _norm(f"{prefix}.norm", c) + _linear(f"{prefix}.lin1", hidden, c) + _linear(f"{prefix}.lin2", c, hidden)


def _conformer(prefix, cfg: ModelConfig):
    c = cfg.channels
    hidden = cfg.ffn_mult * c
    return (_feed_forward(f"{prefix}.ffn1", c, hidden)
            + _norm(f"{prefix}.attn.norm", c)
            + _linear(f"{prefix}.attn.q", c, c) + _linear(f"{prefix}.attn.k", c, c)
            + _linear(f"{prefix}.attn.v", c, c) + _linear(f"{prefix}.attn.out", c, c)
            + _norm(f"{prefix}.conv.norm", c) + _linear(f"{prefix}.conv.pw1", 2 * c, c)
            + _depthwise(f"{prefix}.conv.dw", c, cfg.conformer_kernel)
            + _norm(f"{prefix}.conv.dw_norm", c) + _linear(f"{prefix}.conv.pw2", c, c)
            + _feed_forward(f"{prefix}.ffn2", c, hidden)
            + _norm(f"{prefix}.final_norm", c))


def parameter_layout(cfg: ModelConfig) -> list[ParamSpec]:
    """Ordered layout of every learnable tensor."""
    c = cfg.channels
    specs = []
    specs += _conv("encoder.in_conv", c, 3, 1, 1) + _norm("encoder.in_norm", c) + _prelu("encoder.in_prelu", c)
    specs += _dense("encoder", cfg)
    specs += _conv("encoder.down_conv", c, c, 1, 3) + _norm("encoder.down_norm", c) + _prelu("encoder.down_prelu", c)
    for n in range(cfg.num_blocks):
        if cfg.enable_cfb:
            specs += _conv_forward(f"blocks.{n}.cfb.ff1", c)
            specs += _depthwise(f"blocks.{n}.cfb.sca.q_gate", c, 3)
            specs += _depthwise(f"blocks.{n}.cfb.sca.k_gate", c, 3)
            specs += _conv_forward(f"blocks.{n}.cfb.ff2", c)
        if cfg.enable_t_conformer:
            specs += _conformer(f"blocks.{n}.t_conformer", cfg)
        if cfg.enable_f_conformer:
            specs += _conformer(f"blocks.{n}.f_conformer", cfg)
    for head, out_ch in (("mask", 1), ("complex", 2)):
        prefix = f"decoder.{head}"
        specs += _dense(prefix, cfg)
        specs += _conv_transpose(f"{prefix}.up_conv", c, c, 1, 3) + _norm(f"{prefix}.up_norm", c)
        specs += _prelu(f"{prefix}.up_prelu", c)
        specs += _conv(f"{prefix}.out_conv", out_ch, c, 1, 1)
        if head == "mask":
            specs += _prelu(f"{prefix}.out_prelu", 1)
    return specs


def count_parameters(cfg: ModelConfig) -> int:
    return sum(s.size for s in parameter_layout(cfg))


def _module_of(name: str) -> str:
    parts = name.split(".")
    if parts[0] == "blocks":
        return ".".join(parts[:3])
    return ".".join(parts[:2]) if parts[0] == "decoder" else parts[0]


def parameter_breakdown(cfg: ModelConfig) -> "OrderedDict[str, int]":
    """Learnable scalars per module (encoder, blocks.n.<branch>, decoder.<head>)."""
    out: OrderedDict[str, int] = OrderedDict()
    for s in parameter_layout(cfg):
        key = _module_of(s.name)
        out[key] = out.get(key, 0) + s.size
    return out


class ModelParameters:
    """Named, ordered collection of learnable tensors."""

    def __init__(self, tensors: "OrderedDict[str, Tensor] | None" = None):
        self._tensors: OrderedDict[str, Tensor] = OrderedDict(tensors or {})

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._tensors[name]
        except KeyError:
            raise KeyError(f"no parameter named {name!r}") from None

    def __setitem__(self, name: str, value: Tensor) -> None:
        self._tensors[name] = value

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def names(self) -> list[str]:
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def values(self):
        return self._tensors.values()

    def numel(self) -> int:
        return sum(t.size for t in self._tensors.values())

    @property
    def dtype(self):
        return next(iter(self._tensors.values())).dtype

    def astype(self, dtype) -> "ModelParameters":
        return ModelParameters(OrderedDict(
            (k, Tensor(v.data.astype(dtype), requires_grad=v.requires_grad)) for k, v in self._tensors.items()))

    def copy(self) -> "ModelParameters":
        return ModelParameters(OrderedDict(
            (k, Tensor(v.data.copy(), requires_grad=v.requires_grad)) for k, v in self._tensors.items()))

    def requires_grad_(self, flag: bool = True) -> "ModelParameters":
        for t in self._tensors.values():
            t.requires_grad = flag
        return self

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.grad = None

    def grads(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((k, v.grad if v.grad is not None else np.zeros_like(v.data))
                           for k, v in self._tensors.items())

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(t.data)) for t in self._tensors.values())

    def equals(self, other: "ModelParameters") -> bool:
        """Bitwise equality of names, shapes and values."""
        return self.names() == other.names() and all(
            a.data.dtype == b.data.dtype and np.array_equal(a.data, b.data)
            for a, b in zip(self.values(), other.values()))


def init_parameters(cfg: ModelConfig, seed: int = 0, dtype=np.float32) -> ModelParameters:
    """Kaiming-uniform (fan-in) weights, zero biases, unit norm gains, PReLU slope 0.25."""
    rng = np.random.default_rng(seed)
    tensors: OrderedDict[str, Tensor] = OrderedDict()
    for spec in parameter_layout(cfg):
        if spec.init == "kaiming":
            bound = np.sqrt(6.0 / spec.fan_in)
            data = rng.uniform(-bound, bound, size=spec.shape)
        elif spec.init == "ones":
            data = np.ones(spec.shape)
        elif spec.init == "prelu":
            data = np.full(spec.shape, 0.25)
        else:
            data = np.zeros(spec.shape)
        tensors[spec.name] = Tensor(data.astype(dtype), requires_grad=True)
    return ModelParameters(tensors)
