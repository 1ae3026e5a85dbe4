"""Minimal dense tensors with reverse-mode differentiation."""

from . import fent, kernels, ops
from .core import DEFAULT_DTYPE, Node, Tape, Tensor, active_tape, backward, no_grad
from .gradcheck import GradcheckReport, gradcheck, relative_error
from .nn import Module, Parameter, init_parameters
from .ops import (
    add,
    concat,
    conv3d,
    cross_entropy_from_logits,
    layer_norm,
    linear,
    matmul,
    mean,
    mul,
    relu,
    reshape,
    scale,
    scaled_dot_product_attention,
    sigmoid,
    slice_axis,
    softmax,
    stack,
    sub,
    sum_all,
    take,
    tanh,
    transpose,
)

__all__ = [
    "DEFAULT_DTYPE", "GradcheckReport", "Module", "Node", "Parameter", "Tape", "Tensor",
    "active_tape", "add", "backward", "concat", "conv3d", "cross_entropy_from_logits", "fent",
    "gradcheck", "init_parameters", "kernels", "layer_norm", "linear", "matmul", "mean", "mul",
    "no_grad", "ops", "relative_error", "relu", "reshape", "scale", "scaled_dot_product_attention",
    "sigmoid", "slice_axis", "softmax", "stack", "sub", "sum_all", "take", "tanh", "transpose",
]
