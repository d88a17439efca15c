"""Checkpoint files.

Layout: a UTF-8 text header of ``key = value`` lines (model and STFT
config), one ``param <name> <d0,d1,...> <byte-offset>`` line per tensor in
layout order, an ``end`` line, then the little-endian float32 payloads
back to back. Loading checks every manifest entry against the layout the
stored config implies.
"""
from __future__ import annotations

import io
from collections import OrderedDict
from dataclasses import fields
from pathlib import Path

import numpy as np

from ..numerics import Tensor
from ..signal import StftConfig
from .config import ModelConfig
from .params import ModelParameters, parameter_layout

MAGIC = "CADB-CHECKPOINT 1"


class CheckpointError(ValueError):
    """Checkpoint is malformed or does not match the expected configuration."""


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(str(i) for i in v)
    return repr(v) if isinstance(v, float) else str(v)


def parse_value(text: str, default):
    text = text.strip()
    if isinstance(default, bool):
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, tuple):
        return tuple(int(i) for i in text.split(",") if i.strip())
    return text


def config_items(prefix: str, cfg) -> list[tuple[str, str]]:
    return [(f"{prefix}.{f.name}", format_value(getattr(cfg, f.name))) for f in fields(cfg)]


def config_from_items(cls, items: dict, prefix: str):
    defaults = cls()
    kwargs = {}
    for f in fields(cls):
        key = f"{prefix}.{f.name}"
        if key in items:
            kwargs[f.name] = parse_value(items[key], getattr(defaults, f.name))
    return cls(**kwargs)


def save_checkpoint(path, params: ModelParameters, model_config: ModelConfig, stft_config: StftConfig) -> None:
    layout = parameter_layout(model_config)
    if [s.name for s in layout] != params.names():
        raise CheckpointError("parameter names do not match the layout implied by the config")
    header = io.StringIO()
    header.write(MAGIC + "\n")
    for key, value in config_items("model", model_config) + config_items("stft", stft_config):
        header.write(f"{key} = {value}\n")
    offset = 0
    for spec in layout:
        shape = ",".join(str(d) for d in spec.shape)
        header.write(f"param {spec.name} {shape} {offset}\n")
        offset += spec.size * 4
    header.write("end\n")
    with open(path, "wb") as fh:
        fh.write(header.getvalue().encode("utf-8"))
        for spec in layout:
            arr = params[spec.name].data
            if arr.shape != spec.shape:
                raise CheckpointError(f"{spec.name}: shape {arr.shape} != expected {spec.shape}")
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path, expected: ModelConfig | None = None):
    """Return ``(params, model_config, stft_config)``.

    Raises :class:`CheckpointError` when the file is malformed, when its
    manifest disagrees with its own config, or when ``expected`` is given
    and differs from the stored model config.
    """
    raw = Path(path).read_bytes()
    pos = 0
    lines = []
    while True:
        nl = raw.find(b"\n", pos)
        if nl < 0:
            raise CheckpointError(f"{path}: header is not terminated")
        line = raw[pos:nl].decode("utf-8", errors="replace")
        pos = nl + 1
        if line == "end":
            break
        lines.append(line)
    if not lines or lines[0] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    items, manifest = {}, []
    for line in lines[1:]:
        if line.startswith("param "):
            parts = line.split()
            if len(parts) != 4:
                raise CheckpointError(f"{path}: malformed manifest line {line!r}")
            shape = tuple(int(d) for d in parts[2].split(",") if d)
            manifest.append((parts[1], shape, int(parts[3])))
        elif "=" in line:
            key, value = line.split("=", 1)
            items[key.strip()] = value.strip()
        else:
            raise CheckpointError(f"{path}: malformed header line {line!r}")
    try:
        model_config = config_from_items(ModelConfig, items, "model")
        stft_config = config_from_items(StftConfig, items, "stft")
    except ValueError as exc:
        raise CheckpointError(f"{path}: invalid stored config: {exc}") from exc
    if expected is not None and expected != model_config:
        raise CheckpointError(f"{path}: checkpoint config {model_config} does not match expected {expected}")
    layout = parameter_layout(model_config)
    if [(s.name, s.shape) for s in layout] != [(n, s) for n, s, _ in manifest]:
        raise CheckpointError(f"{path}: parameter manifest does not match the stored config")
    payload = raw[pos:]
    tensors: OrderedDict[str, Tensor] = OrderedDict()
    for spec, (_, _, offset) in zip(layout, manifest):
        nbytes = spec.size * 4
        if offset + nbytes > len(payload):
            raise CheckpointError(f"{path}: payload truncated at {spec.name}")
        arr = np.frombuffer(payload, dtype="<f4", count=spec.size, offset=offset)
        tensors[spec.name] = Tensor(arr.astype(np.float32).reshape(spec.shape), requires_grad=True)
    return ModelParameters(tensors), model_config, stft_config
