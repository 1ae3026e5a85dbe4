"""End-to-end gradient verification of the full network on a small instance."""

from __future__ import annotations

import numpy as np

from .data import NUM_ANTENNAS
from .model import FusionEnsembleNet, ModelConfig
from .tensor import GradcheckReport, Tensor, gradcheck

# small enough that every coordinate can be differenced in a few minutes
TINY_CONFIG = dict(num_classes=3, feature_dim=4, temporal_dim=4, widths=[2, 3],
                   transformer_heads=2, rgb_size=8, rdm_size=8)
TINY_FRAMES = 3
TINY_BATCH = 2
BIAS_JITTER = 0.1


def tiny_problem(seed: int = 0) -> tuple:
    """A float64 network plus one batch, all drawn from ``seed``.

    Biases are jittered away from their zero initialisation so that no ReLU
    pre-activation sits exactly on the kink, where the derivative is undefined
    and central differences would straddle it.
    """
    cfg = ModelConfig(**TINY_CONFIG)
    model = FusionEnsembleNet(cfg, seed=seed).to_dtype(np.float64)
    rng = np.random.default_rng([seed, 7])
    for name, p in model.named_parameters():
        if p.ndim == 1 and not name.endswith("gain"):
            p.data[:] = rng.uniform(-BIAS_JITTER, BIAS_JITTER, size=p.shape)
    s = cfg.rgb_size
    rgb = Tensor(rng.normal(size=(TINY_BATCH, TINY_FRAMES, cfg.rgb_channels, s, s)))
    rdm = Tensor(rng.normal(size=(TINY_BATCH, NUM_ANTENNAS, TINY_FRAMES, cfg.rdm_channels, cfg.rdm_size, cfg.rdm_size)))
    labels = rng.integers(0, cfg.num_classes, size=TINY_BATCH)
    return model, rgb, rdm, labels


def model_gradcheck(seed: int = 0, max_per_tensor=None, difference_dtype=np.longdouble,
                    step: float = 1e-5, tolerance: float = 1e-4) -> GradcheckReport:
    """Difference every parameter of the tiny network against its tape gradient."""
    model, rgb, rdm, labels = tiny_problem(seed)
    named = list(model.named_parameters())
    return gradcheck(lambda: model.loss(rgb, rdm, labels), [p for _, p in named], [n for n, _ in named],
                     step=step, tolerance=tolerance, max_per_tensor=max_per_tensor,
                     rng=np.random.default_rng(seed), difference_dtype=difference_dtype)
