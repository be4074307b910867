"""Tensor substrate: autodiff, optimizers, gradient checking."""

from .gradient_check import GradcheckReport, gradcheck, relative_error
from .optim import OptimizerState, clip_grad_norm, optimizer_step
from .tensor import (
    Graph,
    Tensor,
    add,
    backward,
    broadcast_to,
    concat,
    cross_entropy,
    div,
    gelu,
    getitem,
    layer_norm,
    matmul,
    mean_axis,
    mul,
    relu,
    reshape,
    scale,
    sigmoid,
    slice_axis,
    softmax_lastdim,
    softplus,
    sub,
    sum,
    swap_last,
    take,
    tanh,
    transpose,
)

__all__ = [
    "Graph", "Tensor", "GradcheckReport", "OptimizerState",
    "add", "backward", "broadcast_to", "clip_grad_norm", "concat", "cross_entropy", "div",
    "gelu", "getitem", "gradcheck", "layer_norm", "matmul", "mean_axis", "mul",
    "optimizer_step", "relative_error", "relu", "reshape", "scale", "sigmoid", "slice_axis",
    "softmax_lastdim", "softplus", "sub", "sum", "swap_last", "take", "tanh", "transpose",
]
