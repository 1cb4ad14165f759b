"""Occupancy and point-cloud metrics for reconstructed shapes.

Occupancies are binarised at 0.5. Chamfer distance uses squared nearest
neighbour distances, EMD is the mean Euclidean distance of the optimal
one-to-one matching, and JSD compares 28^3 occupancy histograms of the pooled
points of two shape sets with natural logarithms.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.optimize import linear_sum_assignment

THRESHOLD = 0.5
JSD_GRID = 28
CD_POINTS = 2048
EMD_POINTS = 256


def binarize(occ, threshold: float = THRESHOLD) -> np.ndarray:
    return np.asarray(occ) >= threshold


def miou(pred, gt, threshold: float = THRESHOLD) -> float:
    """Intersection over union of binarised grids; two empty grids score 1.0."""
    p = binarize(pred, threshold)
    g = binarize(gt, threshold)
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {g.shape}")
    union = np.logical_or(p, g).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(p, g).sum() / union)


def mean_part_miou(ious, present) -> tuple[list[float | None], float]:
    """Per-part means over items where the part is present, plus the micro average.

    ``ious`` and ``present`` are (items, N_p). A part that is never present is
    reported as None and does not enter the overall mean.
    """
    ious = np.asarray(ious, dtype=np.float64)
    present = np.asarray(present, dtype=bool)
    if not present.any():
        raise ValueError("no present part instances to average")
    per_part = [float(ious[present[:, j], j].mean()) if present[:, j].any() else None for j in range(ious.shape[1])]
    return per_part, float(ious[present].mean())


def symmetry_score(occ, axis: int = 0, threshold: float = THRESHOLD) -> float:
    """Fraction of occupied voxels whose mirror image across the mid-plane of ``axis`` is occupied."""
    m = binarize(occ, threshold)
    if m.shape[axis] % 2:
        raise ValueError("symmetry score needs an even resolution along the mirror axis")
    n = m.sum()
    if n == 0:
        return 1.0
    return float(np.logical_and(m, np.flip(m, axis=axis)).sum() / n)


def sample_points(occ, k: int, seed: int, threshold: float = THRESHOLD) -> np.ndarray:
    """k voxel centres drawn uniformly with replacement from the occupied voxels, in [0, 1]^3."""
    m = binarize(occ, threshold)
    idx = np.argwhere(m)
    if len(idx) == 0:
        raise ValueError("cannot sample points from an empty grid")
    rng = np.random.default_rng(seed)
    pick = rng.integers(0, len(idx), size=k)
    return (idx[pick] + 0.5) / np.array(m.shape, dtype=np.float64)


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", d, d)


def chamfer(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("chamfer distance needs non-empty clouds")
    d = _sq_dists(a, b)
    return float(d.min(axis=1).mean() + d.min(axis=0).mean())


def emd(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(a) != len(b):
        raise ValueError(f"EMD needs equal-size clouds, got {len(a)} and {len(b)}")
    if len(a) > EMD_POINTS:
        raise ValueError(f"EMD is limited to {EMD_POINTS} points")
    cost = np.sqrt(_sq_dists(a, b))
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].mean())


def _histogram(clouds, grid: int) -> np.ndarray:
    pts = np.concatenate([np.asarray(c, dtype=np.float64) for c in clouds])
    cells = np.clip(np.floor(pts * grid).astype(int), 0, grid - 1)
    flat = (cells[:, 0] * grid + cells[:, 1]) * grid + cells[:, 2]
    h = np.bincount(flat, minlength=grid ** 3).astype(np.float64)
    return h / h.sum()


def jsd(set_a, set_b, grid: int = JSD_GRID) -> float:
    p = _histogram(set_a, grid)
    q = _histogram(set_b, grid)
    m = 0.5 * (p + q)

    def kl(x):
        nz = x > 0
        return float((x[nz] * np.log(x[nz] / m[nz])).sum())

    return 0.5 * kl(p) + 0.5 * kl(q)


def mmd_cov(generated, reference, distance: str = "cd", paired: bool = False) -> tuple[float, float]:
    """Minimum matching distance and coverage of ``generated`` against ``reference``.

    MMD averages, over reference items, the distance to the closest generated
    item. COV is the fraction of reference items that are the nearest
    reference of at least one generated item. With ``paired=True`` generated
    item i is a reconstruction of reference item i and is credited to it.
    """
    if not generated or not reference:
        raise ValueError("MMD/COV need non-empty sets")
    fn = {"cd": chamfer, "emd": emd}[distance.lower()]
    d = np.array([[fn(g, r) for r in reference] for g in generated])
    mmd = float(d.min(axis=0).mean())
    if paired:
        if len(generated) != len(reference):
            raise ValueError("paired coverage needs one generated item per reference")
        covered = set(range(len(reference)))
    else:
        covered = set(int(j) for j in d.argmin(axis=1))
    return mmd, len(covered) / len(reference)


@dataclass
class MetricReport:
    part_iou: list[float | None] = field(default_factory=list)
    part_miou: float = math.nan
    shape_miou: float = math.nan
    transform_mse: float = math.nan
    symmetry_parts: list[float | None] = field(default_factory=list)
    symmetry: float = math.nan
    jsd: float | None = None
    mmd_cd: float | None = None
    mmd_emd: float | None = None
    cov_cd: float | None = None
    cov_emd: float | None = None
    n_items: int = 0

    def flat(self) -> dict[str, object]:
        row: dict[str, object] = {}
        for f in fields(self):
            val = getattr(self, f.name)
            if isinstance(val, list):
                for i, v in enumerate(val, start=1):
                    row[f"{f.name}_{i}"] = v
            else:
                row[f.name] = val
        return row

    def csv_header(self) -> str:
        return ",".join(self.flat())

    def csv_row(self) -> str:
        return ",".join(_fmt(v) for v in self.flat().values())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        flat = self.flat()
        w.writerow(flat.keys())
        w.writerow(_fmt(v) for v in flat.values())
        return buf.getvalue()

    def table(self, part_names=None) -> str:
        names = part_names or [f"part{i}" for i in range(1, len(self.part_iou) + 1)]
        lines = [f"items evaluated     {self.n_items}"]
        for name, iou, sym in zip(names, self.part_iou, self.symmetry_parts or [None] * len(names)):
            lines.append(f"  {name:<16}  IoU {_fmt(iou):>8}   symmetry {_fmt(sym):>8}")
        lines += [
            f"part mIoU (micro)   {_fmt(self.part_miou)}",
            f"shape mIoU          {_fmt(self.shape_miou)}",
            f"transform MSE       {_fmt(self.transform_mse)}",
            f"symmetry (shape)    {_fmt(self.symmetry)}",
        ]
        for key in ("jsd", "mmd_cd", "mmd_emd", "cov_cd", "cov_emd"):
            val = getattr(self, key)
            if val is not None:
                lines.append(f"{key:<20}{_fmt(val)}")
        return "\n".join(lines)


def _fmt(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.6g}"
    return str(v)
