"""3D convolution and transposed convolution with cubic kernels.

Both kernels go through the same im2col / col2im pair so that the transposed
convolution is exactly the adjoint of the convolution for a shared weight.
"""
from __future__ import annotations

import numpy as np

from .tensor import Tensor


def conv_output_extent(n: int, k: int, stride: int, padding: int) -> int:
    return (n + 2 * padding - k) // stride + 1


def deconv_output_extent(n: int, k: int, stride: int, padding: int) -> int:
    return (n - 1) * stride - 2 * padding + k


def _phases(stride: int, k: int, padded: tuple[int, int, int]) -> tuple[int, int, int]:
    """Extent of each stride phase of a padded volume (large enough for every window)."""
    return tuple(-(-n // stride) for n in padded)


def _im2col(x: np.ndarray, k: int, stride: int, padding: int, out) -> np.ndarray:
    """Column matrix (C*k^3, B*L) of a (B, C, H, W, D) array.

    The padded input is split into stride phases once, so every kernel offset
    is a plain contiguous-inner slice of one phase.
    """
    b, c = x.shape[:2]
    ho, wo, do = out
    padded = tuple(n + 2 * padding for n in x.shape[2:])
    ph = _phases(stride, k, padded)
    # (s, s, s, C, B, Ph, Pw, Pd) phase-split, channel-major
    split = np.zeros((stride, stride, stride, c, b, *ph), dtype=x.dtype)
    xt = x.transpose(1, 0, 2, 3, 4)
    for p in range(stride):
        for q in range(stride):
            for r in range(stride):
                # positions with padded index = p + stride*u
                sl = []
                for off, n in zip((p, q, r), x.shape[2:]):
                    first = (off - padding) % stride if padding else off
                    u0 = (first + padding - off) // stride
                    src = slice(first, n, stride)
                    cnt = len(range(first, n, stride))
                    sl.append((src, slice(u0, u0 + cnt)))
                split[p, q, r, :, :, sl[0][1], sl[1][1], sl[2][1]] = xt[:, :, sl[0][0], sl[1][0], sl[2][0]]
    cols = np.empty((c, k, k, k, b, ho, wo, do), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            for m in range(k):
                a0, b0, c0 = i // stride, j // stride, m // stride
                cols[:, i, j, m] = split[i % stride, j % stride, m % stride, :, :, a0:a0 + ho, b0:b0 + wo, c0:c0 + do]
    return cols.reshape(c * k ** 3, b * ho * wo * do)


def _col2im(cols: np.ndarray, b: int, c: int, spatial, k: int, stride: int, padding: int, out) -> np.ndarray:
    """Scatter-add columns (C*k^3, B*L) back onto a (B, C, *spatial) array."""
    ho, wo, do = out
    slabs = cols.reshape(c, k, k, k, b, ho, wo, do)
    padded = tuple(n + 2 * padding for n in spatial)
    ph = _phases(stride, k, padded)
    acc = np.zeros((stride, stride, stride, c, b, *ph), dtype=cols.dtype)
    for i in range(k):
        for j in range(k):
            for m in range(k):
                a0, b0, c0 = i // stride, j // stride, m // stride
                acc[i % stride, j % stride, m % stride, :, :, a0:a0 + ho, b0:b0 + wo, c0:c0 + do] += slabs[:, i, j, m]
    full = np.empty((b, c, *spatial), dtype=cols.dtype)
    for p in range(stride):
        for q in range(stride):
            for r in range(stride):
                sl = []
                for off, n in zip((p, q, r), spatial):
                    first = (off - padding) % stride if padding else off
                    u0 = (first + padding - off) // stride
                    cnt = len(range(first, n, stride))
                    sl.append((slice(first, n, stride), slice(u0, u0 + cnt)))
                full[:, :, sl[0][0], sl[1][0], sl[2][0]] = acc[p, q, r, :, :, sl[0][1], sl[1][1], sl[2][1]].transpose(1, 0, 2, 3, 4)
    return full


def _channel_major(a: np.ndarray) -> np.ndarray:
    """(B, C, H, W, D) -> (C, B*H*W*D)."""
    return a.transpose(1, 0, 2, 3, 4).reshape(a.shape[1], -1)


def _batch_major(a: np.ndarray, b: int, spatial) -> np.ndarray:
    """(C, B*H*W*D) -> contiguous (B, C, H, W, D)."""
    return np.ascontiguousarray(a.reshape(a.shape[0], b, *spatial).transpose(1, 0, 2, 3, 4))


def _check(x: Tensor, weight: Tensor, cin_axis: int, name: str) -> int:
    if x.ndim != 5:
        raise ValueError(f"{name}: expected a 5-D (B, C, H, W, D) input, got shape {x.shape}")
    k = weight.shape[2]
    if weight.ndim != 5 or weight.shape[2:] != (k, k, k):
        raise ValueError(f"{name}: weight must have a cubic kernel, got {weight.shape}")
    if x.shape[1] != weight.shape[cin_axis]:
        raise ValueError(
            f"{name}: input has {x.shape[1]} channels but weight expects {weight.shape[cin_axis]}"
        )
    return k


def conv3d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation with weight (C_out, C_in, k, k, k)."""
    k = _check(x, weight, 1, "conv3d")
    if stride < 1 or padding < 0:
        raise ValueError("conv3d: stride must be positive and padding non-negative")
    b, cin = x.shape[:2]
    cout = weight.shape[0]
    out = tuple(conv_output_extent(n, k, stride, padding) for n in x.shape[2:])
    if min(out) < 1:
        raise ValueError(f"conv3d: non-positive output extent {out} for input {x.shape[2:]}")
    cols = _im2col(x.data, k, stride, padding, out)
    wmat = weight.data.reshape(cout, -1)
    y = _batch_major(wmat @ cols, b, out)
    if bias is not None:
        y += bias.data.reshape(1, -1, 1, 1, 1)

    def backward(g):
        g2 = _channel_major(g)
        gx = gw = gb = None
        if x.requires_grad:
            gx = _col2im(wmat.T @ g2, b, cin, x.shape[2:], k, stride, padding, out)
        if weight.requires_grad:
            gw = (g2 @ cols.T).reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            gb = g2.sum(axis=1)
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._record(y, parents, backward)


def deconv3d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Transposed convolution with weight (C_in, C_out, k, k, k).

    ``deconv3d(x, w)`` is the adjoint of ``conv3d(., w)``: for zero bias,
    <deconv3d(x, w), y> == <x, conv3d(y, w)>.
    """
    k = _check(x, weight, 0, "deconv3d")
    if stride < 1 or padding < 0:
        raise ValueError("deconv3d: stride must be positive and padding non-negative")
    b, cin = x.shape[:2]
    cout = weight.shape[1]
    spatial = x.shape[2:]
    out = tuple(deconv_output_extent(n, k, stride, padding) for n in spatial)
    if min(out) < 1:
        raise ValueError(f"deconv3d: non-positive output extent {out} for input {spatial}")
    x2 = _channel_major(x.data)
    wmat = weight.data.reshape(cin, -1)
    y = _col2im(wmat.T @ x2, b, cout, out, k, stride, padding, spatial)
    if bias is not None:
        y += bias.data.reshape(1, -1, 1, 1, 1)

    def backward(g):
        gcols = _im2col(g, k, stride, padding, spatial)
        gx = gw = gb = None
        if x.requires_grad:
            gx = _batch_major(wmat @ gcols, b, spatial)
        if weight.requires_grad:
            gw = (x2 @ gcols.T).reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3, 4))
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._record(y, parents, backward)
