from signbart.numerics.optim import LrSchedule, OptimizerState, adamw_step, lr_at
from signbart.numerics.tensor import (
    Tape,
    Tensor,
    add,
    backward,
    div,
    dropout,
    exp,
    gelu,
    layer_norm,
    log,
    log_softmax_last_dim,
    matmul,
    mean,
    mul,
    neg,
    reshape,
    softmax_last_dim,
    sub,
    sum_,
    transpose,
)

__all__ = [
    "LrSchedule", "OptimizerState", "Tape", "Tensor", "adamw_step", "add", "backward", "div",
    "dropout", "exp", "gelu", "layer_norm", "log", "log_softmax_last_dim", "lr_at", "matmul",
    "mean", "mul", "neg", "reshape", "softmax_last_dim", "sub", "sum_", "transpose",
]
