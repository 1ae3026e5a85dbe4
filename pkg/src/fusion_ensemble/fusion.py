"""Attention fusion of the RGB and radar vectors of one stream.

The two modality vectors are treated as a two-token sequence, so the
attention weights decide how much each token draws from the other. Attended
tokens are mean-pooled and passed through an output projection.
"""

from __future__ import annotations

from .backbones import Linear
from .errors import ConfigurationError
from .tensor import Module, Parameter, Tensor, ops


def concat_modalities(h_rgb: Tensor, h_rdm: Tensor) -> Tensor:
    """Stack ``[B, d]`` RGB and RDM vectors into tokens ``[B, 2, d]`` (RGB first)."""
    if h_rgb.shape != h_rdm.shape or h_rgb.ndim != 2:
        raise ConfigurationError(f"modality vectors must both be [B, d]; got {h_rgb.shape} and {h_rdm.shape}")
    return ops.stack([h_rgb, h_rdm], axis=1)


def split_modalities(tokens: Tensor) -> tuple[Tensor, Tensor]:
    return ops.take(tokens, 1, 0), ops.take(tokens, 1, 1)


class FusionModule(Module):
    """Single-head scaled dot-product self-attention over the modality tokens."""

    def __init__(self, dim: int):
        super().__init__()
        self.dim = dim
        self.w_q = Parameter((dim, dim))
        self.w_k = Parameter((dim, dim))
        self.w_v = Parameter((dim, dim))
        self.out = Linear(dim, dim)

    def attend(self, tokens: Tensor) -> dict:
        """Intermediate quantities of the fusion, for inspection and tests."""
        if tokens.ndim != 3 or tokens.shape[-1] != self.dim:
            raise ConfigurationError(f"fusion expects [B, n, {self.dim}] tokens, got {tokens.shape}")
        q = ops.linear(tokens, self.w_q)
        k = ops.linear(tokens, self.w_k)
        v = ops.linear(tokens, self.w_v)
        attended, weights, scores = ops.scaled_dot_product_attention(q, k, v, return_scores=True)
        return {"q": q, "k": k, "v": v, "scores": scores, "weights": weights, "attended": attended}

    def __call__(self, tokens: Tensor) -> Tensor:
        parts = self.attend(tokens)
        return self.out(ops.mean(parts["attended"], axis=1))


def attention_fuse(fusion: FusionModule, tokens: Tensor) -> Tensor:
    return fusion(tokens)
