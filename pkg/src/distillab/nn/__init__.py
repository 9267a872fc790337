"""Minimal deterministic tensor kernel: autodiff, Adam, cosine schedule."""
from .gradcheck import grad_check
from .optim import AdamState, CosineSchedule, ParamGroup, adam_step, cosine_lr
from .tensor import (
    Tensor,
    bmm,
    clamp_min,
    concat,
    dropout,
    embedding,
    flip_time,
    gather_time,
    gelu,
    layer_norm,
    log,
    lstm_direction,
    matmul,
    no_grad,
    reduce_mean,
    reduce_sum,
    reshape,
    sigmoid,
    softmax,
    tanh,
    transpose,
)

__all__ = [
    "Tensor",
    "no_grad",
    "ParamGroup",
    "AdamState",
    "CosineSchedule",
    "adam_step",
    "cosine_lr",
    "grad_check",
    "matmul",
    "bmm",
    "embedding",
    "lstm_direction",
    "layer_norm",
    "softmax",
    "sigmoid",
    "tanh",
    "gelu",
    "log",
    "clamp_min",
    "concat",
    "reshape",
    "transpose",
    "flip_time",
    "gather_time",
    "dropout",
    "reduce_sum",
    "reduce_mean",
]
