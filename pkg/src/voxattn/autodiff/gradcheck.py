"""Central finite-difference check of reverse-mode gradients."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, no_grad


class GradCheckError(RuntimeError):
    pass


def grad_check(
    f: Callable[[], Tensor],
    inputs: Sequence[Tensor],
    h: float = 1e-5,
    floor: float = 1e-3,
) -> float:
    """Largest elementwise relative error between backward and central differences.

    ``f`` is re-evaluated with each input entry perturbed by +-h; it must be a
    deterministic scalar function of ``inputs``. The relative error of an
    entry is |a - n| / max(|a|, |n|, floor * scale), where ``scale`` is the
    largest numerical gradient magnitude over all inputs; the floor keeps
    entries whose true gradient is zero from dividing difference noise by ~0.
    """
    for x in inputs:
        x.grad = None
    out = f()
    if out.size != 1:
        raise GradCheckError("grad_check needs a scalar-valued function")
    if not np.isfinite(out.data).all():
        raise GradCheckError("non-finite function value at the base point")
    out.backward()
    pairs = []
    for idx, x in enumerate(inputs):
        analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()
        flat = x.data.reshape(-1)
        an = analytic.reshape(-1)
        num = np.zeros(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            with no_grad():
                flat[i] = orig + h
                fp = float(f().data)
                flat[i] = orig - h
                fm = float(f().data)
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm) and np.isfinite(an[i])):
                raise GradCheckError(f"non-finite value at input {idx}, flat index {i}")
            num[i] = (fp - fm) / (2.0 * h)
        pairs.append((an, num))
        x.grad = None
    scale = max(max(float(np.abs(num).max(initial=0.0)) for _, num in pairs), 1e-300)
    worst = 0.0
    for an, num in pairs:
        rel = np.abs(an - num) / np.maximum(np.maximum(np.abs(an), np.abs(num)), floor * scale)
        worst = max(worst, float(rel.max(initial=0.0)))
    return worst
