"""Temporal layers reducing a feature sequence ``[B, T', D]`` to one vector ``[B, D_t]``."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .backbones import Linear
from .errors import ConfigurationError
from .tensor import Module, Parameter, Tensor, ops

KINDS = ("recurrent", "transformer", "linear")

# default kind per paradigm; both modalities of a stream share the kind
DEFAULT_KINDS = {
    "Full3D": "recurrent",
    "Mixed2D3D": "recurrent",
    "Factorized2Plus1D": "transformer",
    "WindowAttention": "linear",
}


def check_kind(kind: str) -> str:
    if kind not in KINDS:
        raise ConfigurationError(f"unknown temporal kind {kind!r}; expected one of {KINDS}")
    return kind


def assign_temporal_kinds(paradigms: Sequence[str], overrides: Optional[dict] = None) -> list:
    """Kind per stream: the default table, with ``{stream_index: kind}`` overrides applied."""
    kinds = [DEFAULT_KINDS[p] for p in paradigms]
    for i, kind in (overrides or {}).items():
        kinds[int(i)] = check_kind(kind)
    return kinds


class TemporalLayer(Module):
    kind = ""

    def __init__(self, input_dim: int, output_dim: int):
        super().__init__()
        self.input_dim, self.output_dim = input_dim, output_dim

    def reduce(self, seq: Tensor) -> Tensor:
        raise NotImplementedError

    def __call__(self, seq: Tensor) -> Tensor:
        if seq.ndim != 3 or seq.shape[-1] != self.input_dim or seq.shape[1] < 1:
            raise ConfigurationError(f"{self.kind} temporal layer expects [B, T'>=1, {self.input_dim}], got {seq.shape}")
        return self.reduce(seq)


class LSTMCell(Module):
    """Gates stacked as [input, forget, candidate, output] in one affine map of [x, h]."""

    def __init__(self, input_dim: int, hidden: int):
        super().__init__()
        self.hidden = hidden
        self.weight = Parameter((4 * hidden, input_dim + hidden))
        self.bias = Parameter((4 * hidden,), kind="bias")

    def __call__(self, x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
        z = ops.linear(ops.concat([x, h], axis=-1), self.weight, self.bias)
        n = self.hidden
        i = ops.sigmoid(ops.slice_axis(z, -1, 0, n))
        f = ops.sigmoid(ops.slice_axis(z, -1, n, 2 * n))
        g = ops.tanh(ops.slice_axis(z, -1, 2 * n, 3 * n))
        o = ops.sigmoid(ops.slice_axis(z, -1, 3 * n, 4 * n))
        c_new = ops.add(ops.mul(f, c), ops.mul(i, g))
        return ops.mul(o, ops.tanh(c_new)), c_new


class Recurrent(TemporalLayer):
    """Two stacked LSTM layers; the result is the top layer's last hidden state."""

    kind = "recurrent"

    def __init__(self, input_dim: int, output_dim: int, layers: int = 2):
        super().__init__(input_dim, output_dim)
        self.cells = [LSTMCell(input_dim if i == 0 else output_dim, output_dim) for i in range(layers)]

    def reduce(self, seq: Tensor) -> Tensor:
        b, steps = seq.shape[:2]
        zeros = Tensor(np.zeros((b, self.output_dim), dtype=seq.dtype))
        state = [(zeros, zeros) for _ in self.cells]
        h = zeros
        for t in range(steps):
            h = ops.take(seq, 1, t)
            for li, cell in enumerate(self.cells):
                h, c = cell(h, *state[li])
                state[li] = (h, c)
        return h


class TransformerEncoder(TemporalLayer):
    """One pre-norm encoder layer (multi-head self-attention + 2-layer MLP), mean over time.

    No positional encoding is added, so the output does not depend on the
    order of the input frames.
    """

    kind = "transformer"

    def __init__(self, input_dim: int, output_dim: int, heads: int = 2, ffn_mult: int = 2):
        super().__init__(input_dim, output_dim)
        if input_dim % heads:
            raise ConfigurationError(f"transformer width {input_dim} not divisible by {heads} heads")
        d = input_dim
        self.heads = heads
        self.ln1_gain = Parameter((d,), kind="ones")
        self.ln1_bias = Parameter((d,), kind="bias")
        self.q = Linear(d, d)
        self.k = Linear(d, d)
        self.v = Linear(d, d)
        self.o = Linear(d, d)
        self.ln2_gain = Parameter((d,), kind="ones")
        self.ln2_bias = Parameter((d,), kind="bias")
        self.ff1 = Linear(d, ffn_mult * d)
        self.ff2 = Linear(ffn_mult * d, d)
        self.proj = Linear(d, output_dim) if output_dim != d else None

    def _split_heads(self, x: Tensor) -> Tensor:
        b, t, d = x.shape
        return ops.transpose(ops.reshape(x, (b, t, self.heads, d // self.heads)), (0, 2, 1, 3))

    def self_attention(self, x: Tensor) -> Tensor:
        b, t, d = x.shape
        q, k, v = (self._split_heads(f(x)) for f in (self.q, self.k, self.v))
        out, _ = ops.scaled_dot_product_attention(q, k, v)
        out = ops.reshape(ops.transpose(out, (0, 2, 1, 3)), (b, t, d))
        return self.o(out)

    def encode(self, seq: Tensor) -> Tensor:
        x = ops.add(seq, self.self_attention(ops.layer_norm(seq, self.ln1_gain, self.ln1_bias)))
        y = ops.layer_norm(x, self.ln2_gain, self.ln2_bias)
        return ops.add(x, self.ff2(ops.relu(self.ff1(y))))

    def reduce(self, seq: Tensor) -> Tensor:
        pooled = ops.mean(self.encode(seq), axis=1)
        return self.proj(pooled) if self.proj is not None else pooled


class LinearProjection(TemporalLayer):
    kind = "linear"

    def __init__(self, input_dim: int, output_dim: int):
        super().__init__(input_dim, output_dim)
        self.fc = Linear(input_dim, output_dim)

    def reduce(self, seq: Tensor) -> Tensor:
        return self.fc(ops.mean(seq, axis=1))


def build_temporal(kind: str, input_dim: int, output_dim: int, heads: int = 2) -> TemporalLayer:
    check_kind(kind)
    if kind == "recurrent":
        return Recurrent(input_dim, output_dim)
    if kind == "transformer":
        return TransformerEncoder(input_dim, output_dim, heads=heads)
    return LinearProjection(input_dim, output_dim)


def temporal_forward(layer: TemporalLayer, seq: Tensor) -> Tensor:
    return layer(seq)
