"""Registry mapping each modelled relation to the code implementing it.

``docs/equations.md`` renders the same table; a test keeps the two in sync and
checks that every target resolves to a real attribute.
"""

from __future__ import annotations

import importlib
from dataclasses import dataclass


@dataclass(frozen=True)
class Relation:
    name: str
    formula: str
    target: str  # "module:qualified.name" inside the package

    def resolve(self):
        module, _, attr = self.target.partition(":")
        obj = importlib.import_module(f"fusion_ensemble.{module}")
        for part in attr.split("."):
            obj = getattr(obj, part)
        return obj


RELATIONS = (
    Relation("rgb_clip_layout", "rgb batch shape [B, T, C, H, W]", "data:batch_iterator"),
    Relation("rdm_clip_layout", "radar batch shape [B, A=3, T, C, H_r, W_d]", "data:batch_iterator"),
    Relation("preprocess", "bilinear resize, then per-clip per-channel standardisation", "data:preprocess"),
    Relation("rgb_features", "f_rgb = backbone_rgb(x_rgb), shape [B, T', D]", "backbones:extract_rgb"),
    Relation("rdm_antenna_average", "f_rdm = mean over antennas a of backbone_rdm(x_rdm[:, a])",
             "backbones:extract_rdm"),
    Relation("rgb_temporal", "h_rgb = temporal_rgb(f_rgb), shape [B, D_t]", "temporal:temporal_forward"),
    Relation("rdm_temporal", "h_rdm = temporal_rdm(f_rdm), shape [B, D_t]", "temporal:temporal_forward"),
    Relation("modality_concat", "tokens = stack(h_rgb, h_rdm), shape [B, 2, D_t]", "fusion:concat_modalities"),
    Relation("scaled_dot_product_attention", "softmax(q k^T / sqrt(d_k)) v",
             "tensor.ops:scaled_dot_product_attention"),
    Relation("fused_vector", "fused = out_proj(mean over tokens of attention(tokens))", "fusion:attention_fuse"),
    Relation("head_logits", "logits = fused W^T + b", "ensemble:head_logits"),
    Relation("head_probabilities", "p = softmax(logits)", "tensor.ops:softmax"),
    Relation("total_loss", "loss = sum over heads of mean cross-entropy(logits_i, y)", "ensemble:total_loss"),
    Relation("ensemble_average", "p_final = mean over heads of p_i", "ensemble:ensemble_average"),
    Relation("prediction", "y_hat = argmax_k p_final[k], lowest index on ties", "ensemble:predict"),
    Relation("top1_accuracy", "mean(y_hat == y)", "ensemble:top1_accuracy"),
    Relation("adamw_update", "p -= lr (m_hat / (sqrt(v_hat) + eps) + wd p)", "training:adamw_step"),
    Relation("cosine_schedule", "lr_t = lr_min + (lr_0 - lr_min)(1 + cos(pi t / T)) / 2", "training:cosine_lr"),
)


def markdown_table() -> str:
    rows = ["| relation | formula | implementation |", "|---|---|---|"]
    rows += [f"| `{r.name}` | {r.formula} | `{r.target}` |" for r in RELATIONS]
    return "\n".join(rows)
