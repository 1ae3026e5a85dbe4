"""Experiment configuration: one JSON document with ``model``, ``data`` and ``train`` sections.

A top-level ``seed`` feeds both the synthetic generator and training unless a
section sets its own. Within a component, independent streams of randomness
are split from that seed by a fixed key (see :func:`fusion_ensemble.data.seed_sequence`).
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from .data import SynthSpec
from .errors import ConfigurationError
from .model import ModelConfig
from .training import TrainConfig

SECTIONS = ("seed", "model", "data", "train")
DATA_KEYS = ("synth", "manifest", "target_hw")


class ConfigParseError(ConfigurationError):
    """The configuration file could not be read or does not describe a valid run."""


@dataclass
class DataConfig:
    synth: SynthSpec = field(default_factory=SynthSpec)
    manifest: Optional[str] = None
    target_hw: Optional[list] = None

    def to_dict(self) -> dict:
        return {"synth": asdict(self.synth), "manifest": self.manifest, "target_hw": self.target_hw}


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    data: DataConfig = field(default_factory=DataConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0

    def to_dict(self) -> dict:
        return {"seed": self.seed, "model": self.model.to_dict(), "data": self.data.to_dict(),
                "train": self.train.to_dict()}

    @classmethod
    def from_dict(cls, doc: dict, source: str = "<config>") -> "RunConfig":
        if not isinstance(doc, dict):
            raise ConfigParseError(f"{source}: top level must be a JSON object")
        unknown = set(doc) - set(SECTIONS)
        if unknown:
            raise ConfigParseError(f"{source}: unknown section(s) {sorted(unknown)}; expected {list(SECTIONS)}")
        seed = doc.get("seed", 0)
        if not isinstance(seed, int) or seed < 0:
            raise ConfigParseError(f"{source}: field 'seed' must be a non-negative integer, got {seed!r}")
        try:
            model = ModelConfig.from_dict(_section(doc, "model", source))
        except (ConfigurationError, TypeError) as exc:
            raise ConfigParseError(f"{source}: section 'model': {exc}") from exc
        data_doc = _section(doc, "data", source)
        unknown = set(data_doc) - set(DATA_KEYS)
        if unknown:
            raise ConfigParseError(f"{source}: section 'data': unknown fields {sorted(unknown)}")
        try:
            synth_doc = dict(data_doc.get("synth") or {})
            synth_doc.setdefault("seed", seed)
            synth = SynthSpec(**synth_doc)
        except (ConfigurationError, TypeError) as exc:
            raise ConfigParseError(f"{source}: field 'data.synth': {exc}") from exc
        target_hw = data_doc.get("target_hw")
        if target_hw is not None and list(target_hw) != [model.rgb_size, model.rgb_size]:
            raise ConfigParseError(f"{source}: field 'data.target_hw' {target_hw} disagrees with "
                                   f"model.rgb_size {model.rgb_size}")
        try:
            train_doc = dict(_section(doc, "train", source))
            train_doc.setdefault("seed", seed)
            train = TrainConfig.from_dict(train_doc)
        except (ConfigurationError, TypeError) as exc:
            raise ConfigParseError(f"{source}: section 'train': {exc}") from exc
        return cls(model, DataConfig(synth, data_doc.get("manifest"), target_hw), train, seed)


def _section(doc: dict, name: str, source: str) -> dict:
    value = doc.get(name, {})
    if not isinstance(value, dict):
        raise ConfigParseError(f"{source}: section '{name}' must be a JSON object")
    return value


def default_config_text() -> str:
    return resources.files("fusion_ensemble").joinpath("default_config.json").read_text(encoding="utf-8")


def load_config(path: Optional[str | os.PathLike] = None) -> RunConfig:
    """Parse a config file (the bundled default when ``path`` is None).

    Errors name the file and, for JSON syntax problems, the line and column.
    """
    if path is None:
        source, text = "<bundled default_config.json>", default_config_text()
    else:
        source = str(path)
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigParseError(f"cannot read config file {source}: {exc.strerror or exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(f"{source}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return RunConfig.from_dict(doc, source)
