"""Central finite-difference validation of analytic gradients."""
from __future__ import annotations

import math
from typing import Callable

import numpy as np

from ..errors import GradCheckError
from .optim import ParamGroup
from .tensor import Tensor

__all__ = ["grad_check"]


def grad_check(
    loss_fn: Callable[[], Tensor],
    params: list[ParamGroup],
    eps: float = 1e-5,
) -> float:
    """Compare analytic gradients against central differences.

    `loss_fn` must be a deterministic zero-argument callable that rebuilds
    the scalar loss from the current parameter values. Returns the max over
    all parameter entries of |analytic - numeric| / max(1, |numeric|).
    """
    if eps <= 0:
        raise GradCheckError("eps must be positive")

    for group in params:
        for t in group.tensors:
            t.requires_grad = True
            t.grad = None
    loss = loss_fn()
    if not math.isfinite(loss.item()):
        raise GradCheckError("loss is non-finite at the evaluation point")
    loss.backward()
    analytic = [
        [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in g.tensors]
        for g in params
    ]
    for group in params:
        for t in group.tensors:
            t.grad = None

    max_err = 0.0
    for gi, group in enumerate(params):
        for ti, t in enumerate(group.tensors):
            flat = t.data.reshape(-1)
            ana = analytic[gi][ti].reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                lp = loss_fn().item()
                flat[i] = orig - eps
                lm = loss_fn().item()
                flat[i] = orig
                if not (math.isfinite(lp) and math.isfinite(lm)):
                    raise GradCheckError(
                        f"non-finite loss perturbing entry {i} of tensor {ti} "
                        f"in group '{group.name}'"
                    )
                numeric = (lp - lm) / (2.0 * eps)
                err = abs(ana[i] - numeric) / max(1.0, abs(numeric))
                if err > max_err:
                    max_err = err
    return max_err
