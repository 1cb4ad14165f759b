"""Per-part canonicalization and the ground-truth placement transforms.

A present part is cut out by its tight bounding box [lo, hi) and stretched
(nearest neighbour, per axis) so the box fills the whole R^3 grid. Its
transform, in a grid frame normalised to [0, 1] per axis, is

    scale       s = (hi - lo) / R
    translation t = (lo + hi) / (2R) - 0.5

Absent parts get an all-zero canonical grid and the placeholder (1,1,1,0,0,0).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .vxp import LabeledVoxelGrid

PLACEHOLDER = (1.0, 1.0, 1.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class PartTransform:
    scale: tuple[float, float, float]
    translation: tuple[float, float, float]

    def as_vector(self) -> np.ndarray:
        return np.array(self.scale + self.translation, dtype=np.float64)

    @classmethod
    def from_vector(cls, v) -> "PartTransform":
        v = [float(a) for a in v]
        return cls(tuple(v[:3]), tuple(v[3:6]))

    @classmethod
    def placeholder(cls) -> "PartTransform":
        return cls.from_vector(PLACEHOLDER)

    def bbox(self, r: int) -> tuple[np.ndarray, np.ndarray]:
        """Integer [lo, hi) box this transform places a canonical part into."""
        n = np.rint(np.asarray(self.scale) * r).astype(int)
        lo = np.rint((np.asarray(self.translation) + 0.5) * r - n / 2.0).astype(int)
        return lo, lo + n


@dataclass
class PartCanonical:
    part_index: int
    occupancy: np.ndarray  # (R, R, R) float32 in [0, 1]
    present: bool


def _bbox(mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    idx = np.nonzero(mask)
    lo = np.array([a.min() for a in idx])
    hi = np.array([a.max() + 1 for a in idx])
    return lo, hi


def _stretch_index(r: int, lo: int, n: int) -> np.ndarray:
    # canonical j samples source voxel lo + floor((j + 0.5) * n / R)
    j = np.arange(r)
    return lo + ((2 * j + 1) * n) // (2 * r)


def canonicalize_part(grid: LabeledVoxelGrid, part: int) -> tuple[PartCanonical, PartTransform]:
    r = grid.resolution
    mask = grid.labels == part
    if not mask.any():
        return PartCanonical(part, np.zeros((r, r, r), np.float32), False), PartTransform.placeholder()
    lo, hi = _bbox(mask)
    n = hi - lo
    ix, iy, iz = (_stretch_index(r, int(a), int(b)) for a, b in zip(lo, n))
    canon = mask[np.ix_(ix, iy, iz)].astype(np.float32)
    scale = tuple(float(v) for v in n / r)
    trans = tuple(float(v) for v in (lo + hi) / (2.0 * r) - 0.5)
    return PartCanonical(part, canon, True), PartTransform(scale, trans)


def place_nearest(canonical: np.ndarray, transform: PartTransform) -> np.ndarray:
    """Inverse of the canonical stretch: put a canonical part back into its box."""
    r = canonical.shape[0]
    lo, hi = transform.bbox(r)
    out = np.zeros_like(canonical)
    idx = []
    for a, b in zip(lo, hi):
        i = np.arange(max(a, 0), min(b, r))
        n = b - a
        idx.append((i, ((2 * (i - a) + 1) * r) // (2 * n)))
    (ox, cx), (oy, cy), (oz, cz) = idx
    out[np.ix_(ox, oy, oz)] = canonical[np.ix_(cx, cy, cz)]
    return out


def reassemble_gt(parts, transforms, r: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Place every canonical part back and take the voxelwise union.

    Returns (per-part placed occupancy (N_p, R, R, R), union (R, R, R)).
    """
    placed = []
    for part, tf in zip(parts, transforms):
        if not isinstance(tf, PartTransform):
            tf = PartTransform.from_vector(tf)
        occ = part.occupancy if isinstance(part, PartCanonical) else np.asarray(part)
        present = part.present if isinstance(part, PartCanonical) else bool(occ.any())
        placed.append(place_nearest(occ, tf) if present else np.zeros_like(occ))
    placed = np.stack(placed)
    return placed, placed.max(axis=0)


@dataclass
class ShapeSample:
    """Training item: canonical targets, ground-truth transforms, presence, full shape."""

    item_id: str
    canonical: np.ndarray  # (N_p, R, R, R) float32
    transforms: np.ndarray  # (N_p, 6) float64
    present: np.ndarray  # (N_p,) bool
    occupancy: np.ndarray  # (R, R, R) float32


def preprocess(grid: LabeledVoxelGrid) -> ShapeSample:
    canon, tfs, present = [], [], []
    for p in range(1, grid.n_parts + 1):
        c, t = canonicalize_part(grid, p)
        canon.append(c.occupancy)
        tfs.append(t.as_vector())
        present.append(c.present)
    return ShapeSample(
        grid.item_id,
        np.stack(canon),
        np.stack(tfs),
        np.array(present, dtype=bool),
        grid.occupancy(),
    )
