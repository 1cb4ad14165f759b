"""Adam with step-wise learning-rate decay."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .nn import Parameter


class MissingGradientError(RuntimeError):
    pass


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    decay_ratio: float = 1.0
    decay_every: int = 1
    step_count: int = 0

    def effective_lr(self, epoch: int) -> float:
        return self.lr * self.decay_ratio ** (epoch // self.decay_every)


def adam_step(params: Iterable[Parameter], state: AdamState, epoch: int = 0) -> None:
    """One bias-corrected Adam update on every unfrozen parameter, then clear all grads."""
    params = list(params)
    active = [p for p in params if not p.frozen]
    for p in active:
        if p.grad is None:
            raise MissingGradientError(f"parameter {p.name or '<unnamed>'} has no gradient")
    state.step_count += 1
    t = state.step_count
    lr = state.effective_lr(epoch)
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for p in active:
        g = p.grad.astype(p.dtype, copy=False)
        p.adam_m *= state.beta1
        p.adam_m += (1.0 - state.beta1) * g
        p.adam_v *= state.beta2
        p.adam_v += (1.0 - state.beta2) * (g * g)
        update = (lr * (p.adam_m / c1) / (np.sqrt(p.adam_v / c2) + state.eps)).astype(p.dtype)
        p.data -= update
    for p in params:
        p.grad = None
