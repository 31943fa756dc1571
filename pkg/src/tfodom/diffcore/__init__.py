"""Minimal deterministic reverse-mode autodiff engine.

Exactly the primitives the fusion network needs: pointwise math,
convolution, pooling, dense layers, normalizations, bilinear resizing,
and shape plumbing, recorded on a per-invocation tape.
"""

from .tensor import Tensor, Tape, backward, active_tape, as_tensor
from .gradcheck import grad_check
from .checkpoint import save_checkpoint, load_checkpoint, MAGIC, FORMAT_VERSION
from .ops import (
    add, sub, mul, div, neg, scale,
    relu, sigmoid, exp, log, sqrt, sin, cos, absolute,
    atan2, clamp, where, square,
    reshape, transpose, concat, stack, getitem, expand_leading,
    sum, mean, matmul, dense,
    conv2d, max_pool2d, adaptive_avg_pool2d, pool2d, bilinear_resize,
    softmax, batch_norm, layer_norm, pointwise, normalize,
)

__all__ = [
    "Tensor", "Tape", "backward", "active_tape", "as_tensor",
    "grad_check", "save_checkpoint", "load_checkpoint", "MAGIC", "FORMAT_VERSION",
    "add", "sub", "mul", "div", "neg", "scale",
    "relu", "sigmoid", "exp", "log", "sqrt", "sin", "cos", "absolute",
    "atan2", "clamp", "where", "square",
    "reshape", "transpose", "concat", "stack", "getitem", "expand_leading",
    "sum", "mean", "matmul", "dense",
    "conv2d", "max_pool2d", "adaptive_avg_pool2d", "pool2d", "bilinear_resize",
    "softmax", "batch_norm", "layer_norm", "pointwise", "normalize",
]
