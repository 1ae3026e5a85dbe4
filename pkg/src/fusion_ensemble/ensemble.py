"""Per-stream classifier heads, the summed training loss and the probability-averaged ensemble."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .backbones import Linear
from .errors import ConfigurationError, UsageError
from .tensor import Module, Tensor, ops


class ClassifierHead(Module):
    def __init__(self, dim: int, num_classes: int):
        super().__init__()
        if num_classes < 2:
            raise ConfigurationError(f"num_classes must be >= 2, got {num_classes}")
        self.num_classes = num_classes
        self.fc = Linear(dim, num_classes)

    def __call__(self, fused: Tensor) -> Tensor:
        return head_logits(self, fused)


def head_logits(head: ClassifierHead, fused: Tensor) -> Tensor:
    return ops.linear(fused, head.fc.weight, head.fc.bias)


def total_loss(per_head_logits: Sequence[Tensor], labels) -> Tensor:
    """Unweighted sum of the heads' mean cross-entropies."""
    if not per_head_logits:
        raise UsageError("total_loss needs at least one head")
    loss = ops.cross_entropy_from_logits(per_head_logits[0], labels)
    for logits in per_head_logits[1:]:
        loss = ops.add(loss, ops.cross_entropy_from_logits(logits, labels))
    return loss


def ensemble_average(per_head_probs: Sequence) -> np.ndarray:
    """Mean of the heads' class distributions, ``[B, K]``."""
    if not per_head_probs:
        raise UsageError("ensemble_average needs at least one head")
    arrays = [p.data if isinstance(p, Tensor) else np.asarray(p) for p in per_head_probs]
    shape = arrays[0].shape
    for a in arrays[1:]:
        if a.shape != shape:
            raise ConfigurationError(f"head probability shapes differ: {shape} vs {a.shape}")
    return np.mean(np.stack(arrays), axis=0)


def predict(p_final) -> np.ndarray:
    """Row-wise argmax; ``np.argmax`` returns the first maximum, i.e. the lowest class index on ties."""
    p = p_final.data if isinstance(p_final, Tensor) else np.asarray(p_final)
    return np.argmax(p, axis=-1)


def top1_accuracy(y_hat, y_true) -> float:
    y_hat, y_true = np.asarray(y_hat), np.asarray(y_true)
    if y_hat.shape != y_true.shape:
        raise UsageError(f"prediction/label length mismatch: {y_hat.shape} vs {y_true.shape}")
    if y_hat.size == 0:
        raise UsageError("no predictions to score")
    return float(np.mean(y_hat == y_true))


def confusion_matrix(y_hat, y_true, num_classes: int) -> np.ndarray:
    """Counts with true classes on rows and predictions on columns."""
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true), np.asarray(y_hat)), 1)
    return cm


@dataclass
class EnsembleOutput:
    per_head_logits: list
    per_head_probs: list
    p_final: np.ndarray
    y_hat: np.ndarray

    @classmethod
    def from_logits(cls, per_head_logits: Sequence[Tensor]) -> "EnsembleOutput":
        probs = [ops.softmax(Tensor(l.data)).data for l in per_head_logits]
        p_final = ensemble_average(probs)
        return cls(list(per_head_logits), probs, p_final, predict(p_final))
