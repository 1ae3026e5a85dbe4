"""The four-stream network: backbones -> temporal layers -> attention fusion -> heads."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from .backbones import NUM_STREAMS, PARADIGMS, StreamSpec, build_backbone, check_distinct_paradigms, extract_rdm, extract_rgb
from .data import RDM_CHANNELS, RGB_CHANNELS, SEED_INIT, seed_sequence
from .ensemble import ClassifierHead, EnsembleOutput, total_loss
from .errors import ConfigurationError
from .fusion import FusionModule, concat_modalities
from .temporal import DEFAULT_KINDS, build_temporal, check_kind
from .tensor import Module, Tensor, init_parameters, no_grad


def default_streams() -> list:
    return [{"paradigm": p, "temporal": DEFAULT_KINDS[p]} for p in PARADIGMS]


@dataclass
class ModelConfig:
    num_classes: int = 8
    feature_dim: int = 64
    temporal_dim: int = 64
    widths: list = field(default_factory=lambda: [16, 32])
    transformer_heads: int = 2
    rgb_size: int = 16
    rdm_size: int = 16
    rgb_channels: int = RGB_CHANNELS
    rdm_channels: int = RDM_CHANNELS
    patch_size: int = 4
    window: int = 2
    streams: list = field(default_factory=default_streams)

    def __post_init__(self):
        self.widths = list(self.widths)
        self.streams = [dict(s) for s in self.streams]
        for i, s in enumerate(self.streams):
            if set(s) - {"paradigm", "temporal"}:
                raise ConfigurationError(f"model.streams[{i}]: unknown keys {sorted(set(s) - {'paradigm', 'temporal'})}")
            s.setdefault("temporal", DEFAULT_KINDS.get(s.get("paradigm"), "linear"))
            check_kind(s["temporal"])
        check_distinct_paradigms(self.stream_specs())
        if self.num_classes < 2:
            raise ConfigurationError(f"model.num_classes must be >= 2, got {self.num_classes}")

    def stream_specs(self) -> list:
        return [StreamSpec(i, s.get("paradigm", ""), s.get("temporal", ""), self.feature_dim)
                for i, s in enumerate(self.streams)]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigurationError(f"model: unknown fields {sorted(unknown)}")
        return cls(**doc)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


class Stream(Module):
    """One backbone paradigm applied to both modalities, fused and classified."""

    def __init__(self, spec: StreamSpec, cfg: ModelConfig):
        super().__init__()
        self.spec = spec
        kw = {"patch": cfg.patch_size, "window": cfg.window} if spec.paradigm == "WindowAttention" else {}
        self.rgb_backbone = build_backbone(spec.paradigm, cfg.rgb_channels, cfg.feature_dim,
                                           (cfg.rgb_size, cfg.rgb_size), cfg.widths, **kw)
        self.rdm_backbone = build_backbone(spec.paradigm, cfg.rdm_channels, cfg.feature_dim,
                                           (cfg.rdm_size, cfg.rdm_size), cfg.widths, **kw)
        self.rgb_temporal = build_temporal(spec.temporal_kind, cfg.feature_dim, cfg.temporal_dim, cfg.transformer_heads)
        self.rdm_temporal = build_temporal(spec.temporal_kind, cfg.feature_dim, cfg.temporal_dim, cfg.transformer_heads)
        self.fusion = FusionModule(cfg.temporal_dim)
        self.head = ClassifierHead(cfg.temporal_dim, cfg.num_classes)

    def fused(self, v_rgb: Tensor, v_rdm: Tensor) -> Tensor:
        h_rgb = self.rgb_temporal(extract_rgb(self.rgb_backbone, v_rgb))
        h_rdm = self.rdm_temporal(extract_rdm(self.rdm_backbone, v_rdm))
        return self.fusion(concat_modalities(h_rgb, h_rdm))

    def __call__(self, v_rgb: Tensor, v_rdm: Tensor) -> Tensor:
        return self.head(self.fused(v_rgb, v_rdm))


class FusionEnsembleNet(Module):
    def __init__(self, config: Optional[ModelConfig] = None, seed: int = 0):
        super().__init__()
        self.config = config or ModelConfig()
        self.streams = [Stream(spec, self.config) for spec in self.config.stream_specs()]
        init_parameters(self, np.random.default_rng(seed_sequence(seed, SEED_INIT)))

    @property
    def num_heads(self) -> int:
        return len(self.streams)

    def logits(self, v_rgb: Tensor, v_rdm: Tensor) -> list:
        """Per-head logits ``N x [B, K]``."""
        return [stream(v_rgb, v_rdm) for stream in self.streams]

    def loss(self, v_rgb: Tensor, v_rdm: Tensor, labels) -> Tensor:
        return total_loss(self.logits(v_rgb, v_rdm), labels)

    def __call__(self, v_rgb: Tensor, v_rdm: Tensor) -> EnsembleOutput:
        with no_grad():
            return EnsembleOutput.from_logits(self.logits(v_rgb, v_rdm))


assert NUM_STREAMS == len(PARADIGMS)
