"""Flat ``section.key = value`` run configuration files.

Sections: ``model``, ``stft``, ``train``, ``data`` and ``gradcheck``.
Blank lines and ``#`` comments are ignored; unknown keys are rejected.
Names without a path separator or suffix resolve to the built-in configs
shipped in ``cadbconformer/configs``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

from .data import ToyCorpusConfig
from .model import ModelConfig
from .model.checkpoint import config_items, parse_value
from .signal import StftConfig
from .trainer import TrainConfig

BUILTIN = ("toy", "large", "gradcheck")


class ConfigFileError(ValueError):
    pass


@dataclass(frozen=True)
class DataSettings:
    val_examples: int = 8
    val_seed: int = 1000
    val_fraction: float = 0.1


@dataclass(frozen=True)
class GradcheckSettings:
    seed: int = 0
    length: int = 512
    extra_samples: int = 32
    eps: float = 1e-6
    tolerance: float = 1e-4


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    stft: StftConfig = field(default_factory=StftConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    toy: ToyCorpusConfig = field(default_factory=ToyCorpusConfig)
    data: DataSettings = field(default_factory=DataSettings)
    gradcheck: GradcheckSettings = field(default_factory=GradcheckSettings)


# config section -> (RunConfig attribute, dataclass)
_SECTIONS = {
    "model": [("model", ModelConfig)],
    "stft": [("stft", StftConfig)],
    "train": [("train", TrainConfig)],
    "data": [("toy", ToyCorpusConfig), ("data", DataSettings)],
    "gradcheck": [("gradcheck", GradcheckSettings)],
}


def parse_text(text: str, source: str = "<config>") -> RunConfig:
    values: dict[str, dict[str, dict]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigFileError(f"{source}:{lineno}: expected 'section.key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        section, _, name = key.partition(".")
        targets = _SECTIONS.get(section)
        owner = next(((attr, cls) for attr, cls in targets or [] if name in {f.name for f in fields(cls)}), None)
        if owner is None:
            raise ConfigFileError(f"{source}:{lineno}: unknown key {key!r}")
        attr, cls = owner
        try:
            parsed = parse_value(value, getattr(cls(), name))
        except ValueError as exc:
            raise ConfigFileError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
        values.setdefault(attr, {})[name] = parsed
    built = {}
    for targets in _SECTIONS.values():
        for attr, cls in targets:
            try:
                built[attr] = cls(**values.get(attr, {}))
            except (ValueError, TypeError) as exc:
                raise ConfigFileError(f"{source}: invalid {attr} settings: {exc}") from None
    return RunConfig(**built)


def load(spec: str | Path) -> RunConfig:
    """Load a config file, or a built-in config by name."""
    text = str(spec)
    if text in BUILTIN:
        body = resources.files("cadbconformer.configs").joinpath(f"{text}.cfg").read_text()
        return parse_text(body, f"builtin:{text}")
    path = Path(spec)
    try:
        body = path.read_text()
    except OSError as exc:
        raise ConfigFileError(f"cannot read config {path}: {exc.strerror or exc}") from None
    return parse_text(body, str(path))


def dump(cfg: RunConfig) -> str:
    lines = []
    for section, targets in _SECTIONS.items():
        for attr, _ in targets:
            lines += [f"{k} = {v}" for k, v in config_items(section, getattr(cfg, attr))]
    return "\n".join(lines) + "\n"
