"""Procedural labeled chairs and tables, mirror-symmetric about the x mid-plane.

Axes: x is left/right (the mirror axis), y is up, z runs front to back.
Chair labels follow back=1, seat=2, leg=3, armrest=4; table labels top=1, leg=2.
"""
from __future__ import annotations

import numpy as np

from .vxp import LabeledVoxelGrid

CATEGORIES = {"chair": ("back", "seat", "leg", "armrest"), "table": ("top", "leg")}
ARMREST_PROBABILITY = 0.7


def _box(labels: np.ndarray, label: int, x, y, z) -> None:
    r = labels.shape[0]
    # mirror every box in x so the shape is symmetric by construction
    for xa, xb in ((x[0], x[1]), (r - x[1], r - x[0])):
        labels[xa:xb, y[0]:y[1], z[0]:z[1]] = label


def _randint(rng: np.random.Generator, lo: float, hi: float) -> int:
    lo, hi = int(round(lo)), int(round(hi))
    return int(rng.integers(lo, max(hi, lo) + 1))


def _chair(rng: np.random.Generator, r: int) -> np.ndarray:
    labels = np.zeros((r, r, r), np.uint8)
    thick_hi = max(2, r // 10)
    x0 = r // 2 - _randint(rng, 0.22 * r, 0.38 * r)
    xm = (r + 1) // 2  # boxes are given on the low-x half and mirrored
    z0 = _randint(rng, 0.12 * r, 0.3 * r)
    z1 = _randint(rng, 0.72 * r, 0.88 * r)
    ys = _randint(rng, 0.28 * r, 0.45 * r)
    st = _randint(rng, 2, thick_hi)
    bt = _randint(rng, 2, thick_hi)
    lt = _randint(rng, 2, thick_hi)
    yt = min(r, _randint(rng, 0.75 * r, 0.97 * r))
    has_arms = rng.random() < ARMREST_PROBABILITY
    arm_h = _randint(rng, 0.12 * r, 0.2 * r)

    _box(labels, 3, (x0, x0 + lt), (0, ys), (z0, z0 + lt))
    _box(labels, 3, (x0, x0 + lt), (0, ys), (z1 - lt, z1))
    _box(labels, 2, (x0, xm), (ys, ys + st), (z0, z1))
    _box(labels, 1, (x0, xm), (ys + st, yt), (z1 - bt, z1))
    if has_arms:
        ya = min(ys + st + arm_h, yt - 2)
        _box(labels, 4, (x0, x0 + 2), (ya, ya + 2), (z0, z1 - bt))
        _box(labels, 4, (x0, x0 + 2), (ys + st, ya), (z0, z0 + 2))
    return labels


def _table(rng: np.random.Generator, r: int) -> np.ndarray:
    labels = np.zeros((r, r, r), np.uint8)
    thick_hi = max(2, r // 10)
    x0 = r // 2 - _randint(rng, 0.25 * r, 0.45 * r)
    xm = (r + 1) // 2
    z0 = _randint(rng, 0.08 * r, 0.3 * r)
    z1 = _randint(rng, 0.7 * r, 0.92 * r)
    yh = _randint(rng, 0.45 * r, 0.8 * r)
    tt = _randint(rng, 2, thick_hi)
    lt = _randint(rng, 2, thick_hi)
    _box(labels, 2, (x0, x0 + lt), (0, yh), (z0, z0 + lt))
    _box(labels, 2, (x0, x0 + lt), (0, yh), (z1 - lt, z1))
    _box(labels, 1, (x0, xm), (yh, yh + tt), (z0, z1))
    return labels


def generate_synthetic(category: str, seed: int, resolution: int = 32) -> LabeledVoxelGrid:
    """Deterministic procedural shape; a pure function of (category, seed, resolution)."""
    if category not in CATEGORIES:
        raise ValueError(f"unknown category {category!r}; choose from {sorted(CATEGORIES)}")
    if resolution < 16:
        raise ValueError("synthetic shapes need resolution >= 16")
    rng = np.random.default_rng([seed, resolution, sorted(CATEGORIES).index(category)])
    build = _chair if category == "chair" else _table
    labels = build(rng, resolution)
    return LabeledVoxelGrid(labels, len(CATEGORIES[category]), category, f"{category}_{seed:05d}")
