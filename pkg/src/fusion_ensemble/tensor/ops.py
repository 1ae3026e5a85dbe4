"""Differentiable primitives.

Every function computes its result with numpy and, when a tape is active,
registers a closure mapping the output gradient to input gradients. Shapes are
checked strictly: apart from batched matmul and the bias terms of ``linear``
and ``conv3d`` nothing broadcasts.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from ..errors import ConfigurationError, DataError
from . import kernels
from .core import Tensor, record


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ConfigurationError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------- elementwise

def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _same_shape("add", a, b)
    out = Tensor(a.data + b.data)
    return record("add", (a, b), out, lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _same_shape("sub", a, b)
    out = Tensor(a.data - b.data)
    return record("sub", (a, b), out, lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _same_shape("mul", a, b)
    out = Tensor(a.data * b.data)
    return record("mul", (a, b), out, lambda g: (g * b.data, g * a.data))


def scale(a: Tensor, c: float) -> Tensor:
    out = Tensor(a.data * a.data.dtype.type(c))
    return record("scale", (a,), out, lambda g: (g * g.dtype.type(c),))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    out = Tensor(np.where(mask, a.data, a.data.dtype.type(0)))
    return record("relu", (a,), out, lambda g: (g * mask,))


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    # split by sign so exp never overflows
    e = np.exp(-np.abs(x))
    s = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype)
    out = Tensor(s)
    return record("sigmoid", (a,), out, lambda g: (g * s * (1 - s),))


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)
    out = Tensor(t)
    return record("tanh", (a,), out, lambda g: (g * (1 - t * t),))


# ---------------------------------------------------------------- shape ops

def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    src = a.shape
    out = Tensor(a.data.reshape(shape))
    return record("reshape", (a,), out, lambda g: (g.reshape(src),))


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = Tensor(a.data.transpose(axes))
    return record("transpose", (a,), out, lambda g: (g.transpose(inv),))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    ref = tensors[0]
    ax = axis % ref.ndim
    for t in tensors[1:]:
        if t.ndim != ref.ndim or any(t.shape[i] != ref.shape[i] for i in range(ref.ndim) if i != ax):
            raise ConfigurationError(f"concat: incompatible shapes {ref.shape} and {t.shape} on axis {axis}")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=ax))
    bounds = np.cumsum([t.shape[ax] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=ax))

    return record("concat", tensors, out, backward)


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    """``a[..., start:stop, ...]`` along one axis."""
    ax = axis % a.ndim
    index = [slice(None)] * a.ndim
    index[ax] = slice(start, stop)
    index = tuple(index)
    out = Tensor(a.data[index])

    def backward(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return record("slice", (a,), out, backward)


def take(a: Tensor, axis: int, i: int) -> Tensor:
    """Select index ``i`` along ``axis`` and drop that axis."""
    ax = axis % a.ndim
    piece = slice_axis(a, ax, i, i + 1)
    return reshape(piece, a.shape[:ax] + a.shape[ax + 1:])


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    ax = axis % (tensors[0].ndim + 1)
    expanded = [reshape(t, t.shape[:ax] + (1,) + t.shape[ax:]) for t in tensors]
    return concat(expanded, axis=ax)


# ---------------------------------------------------------------- reductions

def sum_all(a: Tensor) -> Tensor:
    out = Tensor(np.asarray(a.data.sum(), dtype=a.dtype))
    return record("sum", (a,), out, lambda g: (np.broadcast_to(g, a.shape).copy(),))


def mean(a: Tensor, axis: int) -> Tensor:
    ax = axis % a.ndim
    n = a.shape[ax]
    out = Tensor(a.data.mean(axis=ax))

    def backward(g):
        return (np.broadcast_to(np.expand_dims(g, ax) / g.dtype.type(n), a.shape).copy(),)

    return record("mean", (a,), out, backward)


# ---------------------------------------------------------------- linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matmul; leading (batch) dimensions broadcast numpy-style."""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ConfigurationError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    out = Tensor(np.matmul(a.data, b.data))

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return record("matmul", (a, b), out, backward)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """``x @ weight.T + bias`` over the trailing axis of ``x``."""
    d_out, d_in = weight.shape
    if x.shape[-1] != d_in:
        raise ConfigurationError(
            f"linear: input trailing dim {x.shape[-1]} (shape {x.shape}) != weight in-dim {d_in} (shape {weight.shape})"
        )
    if bias is not None and bias.shape != (d_out,):
        raise ConfigurationError(f"linear: bias shape {bias.shape} != ({d_out},)")
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, d_in)
    y = x2 @ weight.data.T
    if bias is not None:
        y = y + bias.data
    out = Tensor(y.reshape(lead + (d_out,)))

    def backward(g):
        g2 = g.reshape(-1, d_out)
        gx = (g2 @ weight.data).reshape(x.shape)
        gw = g2.T @ x2
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return record("linear", inputs, out, backward)


# ---------------------------------------------------------------- normalisation / probabilities

def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis, max-shifted."""
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(p)

    def backward(g):
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)),)

    return record("softmax", (a,), out, backward)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ConfigurationError(f"layer_norm: affine shapes {gamma.shape}/{beta.shape} for width {d}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + x.dtype.type(eps))
    xhat = xc * inv
    out = Tensor(xhat * gamma.data + beta.data)

    def backward(g):
        lead = tuple(range(g.ndim - 1))
        gg = (g * xhat).sum(axis=lead)
        gb = g.sum(axis=lead)
        gx_hat = g * gamma.data
        gx = inv * (gx_hat - gx_hat.mean(axis=-1, keepdims=True)
                    - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True))
        return gx, gg, gb

    return record("layer_norm", (x, gamma, beta), out, backward)


def cross_entropy_from_logits(logits: Tensor, labels) -> Tensor:
    """Mean over the batch of ``-log softmax(logits)[label]`` via log-sum-exp."""
    if logits.ndim != 2:
        raise ConfigurationError(f"cross_entropy: logits must be [B,K], got {logits.shape}")
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    b, k = logits.shape
    if labels.shape[0] != b:
        raise ConfigurationError(f"cross_entropy: {labels.shape[0]} labels for batch of {b}")
    bad = np.nonzero((labels < 0) | (labels >= k))[0]
    if bad.size:
        i = int(bad[0])
        raise DataError(f"label {int(labels[i])} of sample {i} outside [0, {k})")
    m = logits.data.max(axis=1, keepdims=True)
    z = logits.data - m
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    rows = np.arange(b)
    loss = -logp[rows, labels].mean()
    out = Tensor(np.asarray(loss, dtype=logits.dtype))

    def backward(g):
        grad = np.exp(logp)
        grad[rows, labels] -= 1
        return (grad * (g / logits.dtype.type(b)),)

    return record("cross_entropy", (logits,), out, backward)


# ---------------------------------------------------------------- convolution

def _triple(v) -> tuple:
    if isinstance(v, int):
        return (v, v, v)
    v = tuple(int(i) for i in v)
    if len(v) != 3:
        raise ConfigurationError(f"expected 3 values, got {v}")
    return v


def conv_output_shape(in_shape: Sequence[int], kernel: Sequence[int], stride, padding) -> tuple:
    stride, padding = _triple(stride), _triple(padding)
    return tuple((n + 2 * p - k) // s + 1 for n, k, s, p in zip(in_shape, kernel, stride, padding))


def conv3d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, stride=1, padding=0, backend=None) -> Tensor:
    """3-D cross-correlation over [B,C_in,T,H,W] with weight [C_out,C_in,kT,kH,kW]."""
    stride, padding = _triple(stride), _triple(padding)
    if x.ndim != 5 or weight.ndim != 5:
        raise ConfigurationError(f"conv3d: expected 5-d input and weight, got {x.shape} and {weight.shape}")
    if x.shape[1] != weight.shape[1]:
        raise ConfigurationError(
            f"conv3d: input channels of {x.shape} do not match weight {weight.shape}"
        )
    if min(stride) < 1:
        raise ConfigurationError(f"conv3d: stride must be >= 1, got {stride}")
    c_out, c_in, kt, kh, kw = weight.shape
    if bias is not None and bias.shape != (c_out,):
        raise ConfigurationError(f"conv3d: bias shape {bias.shape} != ({c_out},)")
    padded_dims = [n + 2 * p for n, p in zip(x.shape[2:], padding)]
    if any(k > n for k, n in zip((kt, kh, kw), padded_dims)):
        raise ConfigurationError(f"conv3d: kernel {weight.shape[2:]} larger than padded input {padded_dims}")
    impl = kernels.get_backend(backend)
    if x.dtype not in kernels.COMPILED_DTYPES or weight.dtype not in kernels.COMPILED_DTYPES:
        impl = kernels.python_backend
    pt, ph, pw = padding
    xp = x.data
    if any(padding):
        xp = np.pad(xp, ((0, 0), (0, 0), (pt, pt), (ph, ph), (pw, pw)))
    st, sh, sw = stride
    b = x.shape[0]
    to, ho, wo = conv_output_shape(x.shape[2:], (kt, kh, kw), stride, padding)
    cols = impl.vol2col(xp, kt, kh, kw, st, sh, sw)  # [B, C_in*k, L]
    w2 = weight.data.reshape(c_out, -1)
    y = np.matmul(w2, cols)  # [B, C_out, L]
    if bias is not None:
        y += bias.data[None, :, None]
    out = Tensor(y.reshape(b, c_out, to, ho, wo))
    xp_shape = xp.shape

    def backward(g):
        g2 = g.reshape(b, c_out, -1)
        gw = np.einsum("bol,bkl->ok", g2, cols).reshape(weight.shape)
        gcols = np.matmul(w2.T, g2)
        gxp = impl.col2vol(gcols, xp_shape, kt, kh, kw, st, sh, sw)
        gx = gxp[:, :, pt:pt + x.shape[2], ph:ph + x.shape[3], pw:pw + x.shape[4]]
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=(0, 2))

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return record("conv3d", inputs, out, backward)


# ---------------------------------------------------------------- composite helpers

def scaled_dot_product_attention(q: Tensor, k: Tensor, v: Tensor, return_scores: bool = False):
    """``softmax(q k^T / sqrt(d_k)) v`` over the last two axes.

    Returns ``(output, weights)`` or, with ``return_scores``, ``(output, weights, scores)``
    where ``scores`` are the scaled pre-softmax logits.
    """
    d_k = q.shape[-1]
    kt = transpose(k, tuple(range(k.ndim - 2)) + (k.ndim - 1, k.ndim - 2))
    scores = scale(matmul(q, kt), 1.0 / np.sqrt(d_k))
    weights = softmax(scores)
    out = matmul(weights, v)
    if return_scores:
        return out, weights, scores
    return out, weights


PRIMITIVES = (
    "add", "sub", "mul", "scale", "relu", "sigmoid", "tanh", "reshape", "transpose",
    "concat", "slice", "sum", "mean", "matmul", "linear", "softmax", "layer_norm",
    "cross_entropy", "conv3d",
)
