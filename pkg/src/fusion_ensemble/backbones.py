"""Four small spatiotemporal feature extractors, one per architectural paradigm.

Every backbone maps a clip ``[B, T, C, H, W]`` to a feature sequence
``[B, T', D]``. The time axis is kept so the temporal layer downstream sees a
sequence; space is pooled away.

=================  ==========================================================
paradigm           blocks
=================  ==========================================================
Full3D             conv 3x3x3 /(1,2,2) -> conv 3x3x3 /(1,2,2)
Mixed2D3D          conv 3x3x3 /(1,2,2) -> conv 1x3x3 /(1,2,2)
Factorized2Plus1D  [conv 1x3x3 /(1,2,2) -> conv 3x1x1] x 2
WindowAttention    4x4 patch embed -> self-attention within 2x2-patch windows
=================  ==========================================================

Conv blocks use ReLU; all conv paradigms end with a spatial mean and a linear
map to ``D``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigurationError
from .tensor import Module, Parameter, Tensor, ops

PARADIGMS = ("Full3D", "Mixed2D3D", "Factorized2Plus1D", "WindowAttention")
NUM_STREAMS = 4


@dataclass
class StreamSpec:
    stream_id: int
    paradigm: str
    temporal_kind: str
    feature_dim: int = 64

    def __post_init__(self):
        if self.paradigm not in PARADIGMS:
            raise ConfigurationError(f"stream {self.stream_id}: unknown paradigm {self.paradigm!r}; "
                                     f"expected one of {PARADIGMS}")


def check_distinct_paradigms(specs: Sequence[StreamSpec]) -> None:
    if len(specs) != NUM_STREAMS:
        raise ConfigurationError(f"expected {NUM_STREAMS} streams, got {len(specs)}")
    seen = [s.paradigm for s in specs]
    if len(set(seen)) != len(seen):
        raise ConfigurationError(f"stream paradigms must be pairwise distinct, got {seen}")


class Conv3d(Module):
    def __init__(self, c_in, c_out, kernel, stride=(1, 1, 1), padding=(0, 0, 0)):
        super().__init__()
        self.stride, self.padding = tuple(stride), tuple(padding)
        self.weight = Parameter((c_out, c_in) + tuple(kernel))
        self.bias = Parameter((c_out,), kind="bias")

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv3d(x, self.weight, self.bias, self.stride, self.padding)


class Linear(Module):
    def __init__(self, d_in, d_out, bias=True):
        super().__init__()
        self.weight = Parameter((d_out, d_in))
        if bias:
            self.bias = Parameter((d_out,), kind="bias")
        else:
            self.bias = None

    def __call__(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.weight, self.bias)


def _spatial_pool_to_sequence(x: Tensor) -> Tensor:
    """[B, C, T, H, W] -> [B, T, C] by averaging over H and W."""
    b, c, t, h, w = x.shape
    pooled = ops.mean(ops.reshape(x, (b, c, t, h * w)), axis=-1)
    return ops.transpose(pooled, (0, 2, 1))


class Backbone(Module):
    paradigm = ""
    spatial_divisor = 4

    def __init__(self, in_channels: int, feature_dim: int, input_hw: Sequence[int]):
        super().__init__()
        self.in_channels = in_channels
        self.feature_dim = feature_dim
        h, w = input_hw
        if h % self.spatial_divisor or w % self.spatial_divisor:
            raise ConfigurationError(
                f"{self.paradigm}: input size {h}x{w} not divisible by {self.spatial_divisor}"
            )

    def features(self, x: Tensor) -> Tensor:
        raise NotImplementedError

    def __call__(self, clip: Tensor) -> Tensor:
        if clip.ndim != 5 or clip.shape[2] != self.in_channels:
            raise ConfigurationError(
                f"{self.paradigm}: expected [B, T, {self.in_channels}, H, W] input, got {clip.shape}"
            )
        return self.features(clip)


class _ConvBackbone(Backbone):
    def __init__(self, in_channels, feature_dim, input_hw, widths=(16, 32)):
        super().__init__(in_channels, feature_dim, input_hw)
        self.build(in_channels, widths)
        self.head = Linear(widths[-1], feature_dim)

    def build(self, c_in, widths):
        raise NotImplementedError

    def blocks(self, x: Tensor) -> Tensor:
        raise NotImplementedError

    def features(self, clip: Tensor) -> Tensor:
        x = ops.transpose(clip, (0, 2, 1, 3, 4))  # -> [B, C, T, H, W]
        return self.head(_spatial_pool_to_sequence(self.blocks(x)))


class Full3D(_ConvBackbone):
    paradigm = "Full3D"

    def build(self, c_in, widths):
        self.conv1 = Conv3d(c_in, widths[0], (3, 3, 3), (1, 2, 2), (1, 1, 1))
        self.conv2 = Conv3d(widths[0], widths[1], (3, 3, 3), (1, 2, 2), (1, 1, 1))

    def blocks(self, x):
        return ops.relu(self.conv2(ops.relu(self.conv1(x))))


class Mixed2D3D(_ConvBackbone):
    paradigm = "Mixed2D3D"

    def build(self, c_in, widths):
        self.conv1 = Conv3d(c_in, widths[0], (3, 3, 3), (1, 2, 2), (1, 1, 1))
        self.conv2 = Conv3d(widths[0], widths[1], (1, 3, 3), (1, 2, 2), (0, 1, 1))

    def blocks(self, x):
        return ops.relu(self.conv2(ops.relu(self.conv1(x))))


class Factorized2Plus1D(_ConvBackbone):
    paradigm = "Factorized2Plus1D"

    def build(self, c_in, widths):
        self.spatial1 = Conv3d(c_in, widths[0], (1, 3, 3), (1, 2, 2), (0, 1, 1))
        self.temporal1 = Conv3d(widths[0], widths[0], (3, 1, 1), (1, 1, 1), (1, 0, 0))
        self.spatial2 = Conv3d(widths[0], widths[1], (1, 3, 3), (1, 2, 2), (0, 1, 1))
        self.temporal2 = Conv3d(widths[1], widths[1], (3, 1, 1), (1, 1, 1), (1, 0, 0))

    def blocks(self, x, spatial_only: bool = False):
        x = ops.relu(self.spatial1(x))
        if not spatial_only:
            x = ops.relu(self.temporal1(x))
        x = ops.relu(self.spatial2(x))
        if not spatial_only:
            x = ops.relu(self.temporal2(x))
        return x

    def spatial_features(self, clip: Tensor) -> Tensor:
        """Same network with both temporal convolutions skipped."""
        x = ops.transpose(clip, (0, 2, 1, 3, 4))
        return self.head(_spatial_pool_to_sequence(self.blocks(x, spatial_only=True)))


class WindowAttention(Backbone):
    """Per-frame patch embedding followed by self-attention inside local windows."""

    paradigm = "WindowAttention"

    def __init__(self, in_channels, feature_dim, input_hw, widths=(16, 32), patch=4, window=2):
        self.patch, self.window = patch, window
        self.spatial_divisor = patch * window
        super().__init__(in_channels, feature_dim, input_hw)
        e = widths[-1]
        self.embed = Linear(in_channels * patch * patch, e)
        self.w_q = Parameter((e, e))
        self.w_k = Parameter((e, e))
        self.w_v = Parameter((e, e))
        self.head = Linear(e, feature_dim)

    def windows(self, clip: Tensor) -> Tensor:
        """[B, T, C, H, W] -> [B*T*n_windows, window*window, C*patch*patch]."""
        b, t, c, h, w = clip.shape
        p, s = self.patch, self.window
        gh, gw = h // p, w // p
        x = ops.reshape(clip, (b * t, c, gh // s, s, p, gw // s, s, p))
        # -> [BT, win_row, win_col, row_in_win, col_in_win, C, p, p]
        x = ops.transpose(x, (0, 2, 5, 3, 6, 1, 4, 7))
        return ops.reshape(x, (b * t * (gh // s) * (gw // s), s * s, c * p * p))

    def attend(self, tokens: Tensor) -> Tensor:
        q = ops.linear(tokens, self.w_q)
        k = ops.linear(tokens, self.w_k)
        v = ops.linear(tokens, self.w_v)
        out, _ = ops.scaled_dot_product_attention(q, k, v)
        return out

    def features(self, clip: Tensor) -> Tensor:
        b, t = clip.shape[:2]
        tokens = self.embed(self.windows(clip))
        x = ops.relu(ops.add(tokens, self.attend(tokens)))
        n_tok = x.shape[0] // (b * t) * x.shape[1]
        per_frame = ops.mean(ops.reshape(x, (b * t, n_tok, x.shape[-1])), axis=1)
        return self.head(ops.reshape(per_frame, (b, t, x.shape[-1])))


BACKBONES = {cls.paradigm: cls for cls in (Full3D, Mixed2D3D, Factorized2Plus1D, WindowAttention)}


def build_backbone(paradigm: str, in_channels: int, feature_dim: int, input_hw, widths=(16, 32), **kw) -> Backbone:
    try:
        cls = BACKBONES[paradigm]
    except KeyError:
        raise ConfigurationError(f"unknown paradigm {paradigm!r}; expected one of {PARADIGMS}") from None
    return cls(in_channels, feature_dim, input_hw, widths=widths, **kw)


def extract_rgb(backbone: Backbone, v_rgb: Tensor) -> Tensor:
    """RGB features ``[B, T', D]``."""
    return backbone(v_rgb)


def extract_rdm(backbone: Backbone, v_rdm: Tensor) -> Tensor:
    """Run the shared radar backbone on each antenna and average the features."""
    if v_rdm.ndim != 6:
        raise ConfigurationError(f"RDM input must be [B, A, T, C, H, W], got {v_rdm.shape}")
    b, a = v_rdm.shape[:2]
    if a != 3:
        raise ConfigurationError(f"RDM input must have 3 antennas, got {a}")
    flat = ops.reshape(v_rdm, (b * a,) + v_rdm.shape[2:])
    feats = backbone(flat)
    feats = ops.reshape(feats, (b, a) + feats.shape[1:])
    return ops.mean(feats, axis=1)


def param_count(backbone: Backbone) -> int:
    return int(np.sum([p.size for p in backbone.parameters()]))
