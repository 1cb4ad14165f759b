"""Differentiable placement of canonical parts and their union.

A transform (sx, sy, sz, tx, ty, tz) maps canonical coordinates c to shape
coordinates w = (c - 0.5) * s + 0.5 + t, everything normalised to [0, 1].
Placement samples the canonical grid at c = (w - 0.5 - t) / s + 0.5 for every
output voxel centre with trilinear weights; neighbours outside the grid read
as zero. Because the map is axis-aligned, the trilinear sample factorises into
three R x R interpolation matrices, one per axis.
"""
from __future__ import annotations

import numpy as np

from ..autodiff import functional as F
from ..autodiff.tensor import Tensor, as_tensor


class TransformError(ValueError):
    pass


def _axis_matrix(scale: np.ndarray, trans: np.ndarray, r: int):
    """Interpolation matrix (N, R_out, R_in), its derivative w.r.t. the sample
    position, and the derivatives of the sample positions w.r.t. (s, t)."""
    a = np.arange(r, dtype=scale.dtype)
    centred = (a + 0.5)[None, :] - r * (0.5 + trans[:, None])  # (N, R_out)
    u = centred / scale[:, None] + (0.5 * r - 0.5)
    d = u[:, :, None] - a[None, None, :]
    ad = np.abs(d)
    mat = np.maximum(0.0, 1.0 - ad).astype(scale.dtype)
    dmat = np.where(ad < 1.0, -np.sign(d), 0.0).astype(scale.dtype)
    du_ds = -centred / (scale[:, None] ** 2)
    du_dt = np.broadcast_to(-r / scale[:, None], u.shape)
    return mat, dmat, du_ds, du_dt


def apply_transform(canonical, transform) -> Tensor:
    """Trilinearly place canonical parts (..., R, R, R) with transforms (..., 6)."""
    canonical = as_tensor(canonical)
    transform = as_tensor(transform, dtype=canonical.dtype)
    lead = canonical.shape[:-3]
    r = canonical.shape[-1]
    if canonical.shape[-3:] != (r, r, r):
        raise ValueError(f"canonical grids must be cubic, got {canonical.shape}")
    if transform.shape != (*lead, 6):
        raise ValueError(f"transform shape {transform.shape} does not match parts {lead}")
    tf = transform.data.reshape(-1, 6)
    if not (tf[:, :3] > 0).all():
        raise TransformError("transform scales must be positive")
    v = canonical.data.reshape(-1, r, r, r)
    n = v.shape[0]
    mats = [_axis_matrix(tf[:, ax], tf[:, 3 + ax], r) for ax in range(3)]
    ax_, ay, az = (m[0] for m in mats)
    t1 = v @ az.transpose(0, 2, 1)[:, None]  # (N, i, j, c)
    t2 = ay[:, None] @ t1  # (N, i, b, c)
    out = (ax_ @ t2.reshape(n, r, r * r)).reshape(n, r, r, r)

    def backward(g):
        g = g.reshape(n, r, r * r)
        dt2 = (ax_.transpose(0, 2, 1) @ g).reshape(n, r, r, r)
        dax = g @ t2.reshape(n, r, r * r).transpose(0, 2, 1)
        dt1 = ay.transpose(0, 2, 1)[:, None] @ dt2
        day = (dt2 @ t1.transpose(0, 1, 3, 2)).sum(axis=1)
        dv = dt1 @ az[:, None]
        daz = dt1.reshape(n, r * r, r).transpose(0, 2, 1) @ v.reshape(n, r * r, r)
        gtf = None
        if transform.requires_grad:
            gtf = np.zeros_like(tf)
            for axis, dmat_grad in enumerate((dax, day, daz)):
                _, dmat, du_ds, du_dt = mats[axis]
                du = (dmat_grad * dmat).sum(axis=2)  # (N, R_out)
                gtf[:, axis] = (du * du_ds).sum(axis=1)
                gtf[:, 3 + axis] = (du * du_dt).sum(axis=1)
            gtf = gtf.reshape(transform.shape)
        gv = dv.reshape(canonical.shape) if canonical.requires_grad else None
        return gv, gtf

    return Tensor._record(out.reshape(canonical.shape), (canonical, transform), backward)


def compose_shape(placed, axis: int = 1) -> Tensor:
    """Voxelwise union (maximum) over the part axis; ties route gradient to the lowest part."""
    return F.max_along(as_tensor(placed), axis)
