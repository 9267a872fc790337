"""Parameter groups, Adam, and the cosine learning-rate schedule."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError
from .tensor import Tensor

__all__ = ["ParamGroup", "AdamState", "adam_step", "CosineSchedule", "cosine_lr"]


@dataclass
class ParamGroup:
    """A named, independently freezable set of parameters.

    Frozen groups are skipped entirely by :func:`adam_step`, so their
    payloads stay bit-identical across steps.
    """

    name: str
    tensors: list[Tensor]
    frozen: bool = False

    def set_frozen(self, frozen: bool) -> None:
        self.frozen = frozen
        for t in self.tensors:
            t.requires_grad = not frozen

    def num_params(self) -> int:
        return sum(t.size for t in self.tensors)


@dataclass
class AdamState:
    """First/second moment buffers plus the shared step counter."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(groups: list[ParamGroup], state: AdamState, lr: float) -> None:
    """Apply one bias-corrected Adam update to every unfrozen group.

    Gradients are consumed (reset to None) so the next backward pass starts
    clean. Raises ConfigurationError if an unfrozen tensor has no gradient.
    """
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for group in groups:
        if group.frozen:
            continue
        for j, p in enumerate(group.tensors):
            if p.grad is None:
                raise ConfigurationError(
                    f"no gradient for unfrozen tensor {j} of group '{group.name}'"
                )
            key = (group.name, j)
            m = state.m.get(key)
            if m is None:
                m = state.m[key] = np.zeros_like(p.data)
            v = state.v.get(key)
            if v is None:
                v = state.v[key] = np.zeros_like(p.data)
            g = p.grad
            m *= state.beta1
            m += (1.0 - state.beta1) * g
            v *= state.beta2
            v += (1.0 - state.beta2) * (g * g)
            p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
            p.grad = None


@dataclass(frozen=True)
class CosineSchedule:
    """Half-cosine annealing from lr_high down to lr_low over `horizon` steps."""

    lr_high: float
    lr_low: float
    horizon: int

    def __post_init__(self):
        if not (self.lr_high >= self.lr_low > 0.0):
            raise ConfigurationError(
                f"need lr_high >= lr_low > 0, got {self.lr_high}, {self.lr_low}"
            )
        if self.horizon < 1:
            raise ConfigurationError("schedule horizon must be >= 1")


def cosine_lr(t: int, schedule: CosineSchedule) -> float:
    """Learning rate at step t; steps past the horizon clamp to lr_low."""
    if t < 0:
        raise ConfigurationError("step must be non-negative")
    if t >= schedule.horizon:
        return schedule.lr_low
    span = schedule.lr_high - schedule.lr_low
    return schedule.lr_low + 0.5 * span * (1.0 + math.cos(math.pi * t / schedule.horizon))
