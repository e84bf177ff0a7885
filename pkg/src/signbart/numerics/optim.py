"""AdamW and the cosine-annealing-with-warmup learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from signbart.errors import ContractError, DimensionError, ParameterError
from signbart.numerics.tensor import Tensor


@dataclass
class OptimizerState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-2
    step: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: Mapping[str, Tensor], **hyper) -> "OptimizerState":
        state = cls(**hyper)
        for name, p in params.items():
            state.first_moment[name] = np.zeros_like(p.data)
            state.second_moment[name] = np.zeros_like(p.data)
        return state


def adamw_step(params: Mapping[str, Tensor], state: OptimizerState, lr: float) -> None:
    """One AdamW update in place. Gradients are left for the caller to clear."""
    for name, p in params.items():
        if p.grad is None:
            raise ContractError(f"parameter '{name}' has no gradient")
        if name not in state.first_moment:
            raise ContractError(f"optimizer state has no moments for '{name}'")
        if state.first_moment[name].shape != p.shape:
            raise DimensionError(
                f"moment shape {state.first_moment[name].shape} != parameter shape {p.shape} for '{name}'")

    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    decay = 1.0 - lr * state.weight_decay
    for name, p in params.items():
        g = p.grad
        m = state.first_moment[name]
        v = state.second_moment[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        # decoupled decay is a pure rescale so zero gradients give exactly p * (1 - lr*wd)
        p.data *= decay
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


@dataclass(frozen=True)
class LrSchedule:
    base_lr: float = 2e-4
    warmup_steps: int = 0
    total_steps: int = 1
    min_lr: float = 0.0

    def __post_init__(self):
        if self.total_steps < 1:
            raise ParameterError(f"total_steps must be positive, got {self.total_steps}")
        if not 0 <= self.warmup_steps < self.total_steps:
            raise ParameterError(
                f"need 0 <= warmup_steps < total_steps, got {self.warmup_steps} and {self.total_steps}")
        if not 0.0 <= self.min_lr <= self.base_lr:
            raise ParameterError(f"need 0 <= min_lr <= base_lr, got {self.min_lr} and {self.base_lr}")

    @classmethod
    def from_fraction(cls, base_lr: float, total_steps: int, warmup_fraction: float,
                      min_lr: float = 0.0) -> "LrSchedule":
        return cls(base_lr, int(round(warmup_fraction * total_steps)), total_steps, min_lr)


def lr_at(schedule: LrSchedule, step: int) -> float:
    """Linear warmup to ``base_lr``, then cosine decay to ``min_lr``.

    Steps beyond ``total_steps`` clamp to ``min_lr``.
    """
    s = schedule
    if step < 0:
        raise ParameterError(f"step must be non-negative, got {step}")
    if step >= s.total_steps:
        return s.min_lr
    if step < s.warmup_steps:
        return s.base_lr * step / s.warmup_steps
    progress = (step - s.warmup_steps) / (s.total_steps - s.warmup_steps)
    lr = s.min_lr + 0.5 * (s.base_lr - s.min_lr) * (1.0 + math.cos(math.pi * progress))
    # rounding in the cosine form can overshoot base_lr by one ulp
    return min(lr, s.base_lr)
