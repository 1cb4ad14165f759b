"""Differentiable primitives: arithmetic, reductions, shape ops, activations, norms."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .tensor import Tensor, as_tensor, unbroadcast


def _lift(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.dtype))


# -- arithmetic ------------------------------------------------------------

def add(a, b) -> Tensor:
    a = as_tensor(a)
    b = _lift(b, a)

    def backward(g):
        return unbroadcast(g, a.shape), unbroadcast(g, b.shape)

    return Tensor._record(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a = as_tensor(a)
    b = _lift(b, a)

    def backward(g):
        return unbroadcast(g, a.shape), unbroadcast(-g, b.shape)

    return Tensor._record(a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a = as_tensor(a)
    b = _lift(b, a)

    def backward(g):
        ga = unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor._record(a.data * b.data, (a, b), backward)


def div(a, b) -> Tensor:
    a = as_tensor(a)
    b = _lift(b, a)

    def backward(g):
        ga = unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = unbroadcast(-g * a.data / (b.data * b.data), b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor._record(a.data / b.data, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    return Tensor._record(-a.data, (a,), lambda g: (-g,))


def power(a: Tensor, p: float) -> Tensor:
    def backward(g):
        return (g * p * a.data ** (p - 1),)

    return Tensor._record(a.data ** p, (a,), backward)


def square(a: Tensor) -> Tensor:
    return Tensor._record(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return Tensor._record(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    return Tensor._record(np.log(a.data), (a,), lambda g: (g / a.data,))


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return Tensor._record(out, (a,), lambda g: (g * 0.5 / out,))


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values; the gradient is zero where the clamp is active."""
    inside = (a.data >= lo) & (a.data <= hi)
    return Tensor._record(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul needs operands of rank >= 2")

    def backward(g):
        ga = unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape) if a.requires_grad else None
        gb = unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor._record(a.data @ b.data, (a, b), backward)


# -- reductions ------------------------------------------------------------

def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    axes = _norm_axis(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    return Tensor._record(np.asarray(out), (a,), backward)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axis(axis, a.ndim)
    n = int(np.prod([a.shape[ax] for ax in axes]))
    return mul(sum(a, axes, keepdims), 1.0 / n)


def max_along(a: Tensor, axis: int) -> Tensor:
    """Maximum over one axis; on exact ties the gradient goes to the lowest index."""
    axis = axis % a.ndim
    idx = np.argmax(a.data, axis=axis)
    out = np.take_along_axis(a.data, np.expand_dims(idx, axis), axis=axis).squeeze(axis)

    def backward(g):
        ga = np.zeros_like(a.data)
        np.put_along_axis(ga, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis)
        return (ga,)

    return Tensor._record(out, (a,), backward)


# -- shape ops ------------------------------------------------------------

def reshape(a: Tensor, shape) -> Tensor:
    return Tensor._record(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return Tensor._record(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def getitem(a: Tensor, index) -> Tensor:
    def backward(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, index, g)
        return (ga,)

    return Tensor._record(np.asarray(a.data[index]), (a,), backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    axis = axis % tensors[0].ndim
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward(g):
        return tuple(
            np.take(g, np.arange(lo, hi), axis=axis) for lo, hi in zip(bounds[:-1], bounds[1:])
        )

    return Tensor._record(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    out = np.stack([t.data for t in tensors], axis=axis)
    axis = axis % out.ndim

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return Tensor._record(out, tensors, backward)


# -- activations ----------------------------------------------------------

def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    scale = np.where(a.data > 0, 1.0, slope).astype(a.dtype)
    return Tensor._record(a.data * scale, (a,), lambda g: (g * scale,))


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(a.dtype)
    return Tensor._record(out, (a,), lambda g: (g * out * (1.0 - out),))


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor._record(out, (a,), backward)


def activation(a: Tensor, kind: str, *, slope: float = 0.2, axis: int = -1) -> Tensor:
    if kind == "leaky_relu":
        return leaky_relu(a, slope)
    if kind == "sigmoid":
        return sigmoid(a)
    if kind == "softmax":
        if not -a.ndim <= axis < a.ndim:
            raise ValueError(f"softmax axis {axis} out of range for rank {a.ndim}")
        return softmax(a, axis)
    raise ValueError(f"unknown activation {kind!r}")


# -- affine and normalization ---------------------------------------------

def dense(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map over the last axis: ``x @ weight.T + bias``."""
    f_out, f_in = weight.shape
    if x.shape[-1] != f_in:
        raise ValueError(f"dense: input width {x.shape[-1]} != weight in-features {f_in}")
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, f_in)
    out = x2 @ weight.data.T
    if bias is not None:
        out = out + bias.data

    def backward(g):
        g2 = g.reshape(-1, f_out)
        gx = (g2 @ weight.data).reshape(x.shape) if x.requires_grad else None
        gw = g2.T @ x2 if weight.requires_grad else None
        gb = g2.sum(axis=0) if bias is not None and bias.requires_grad else None
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._record(out.reshape(*lead, f_out), parents, backward)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data
    n = x.shape[-1]

    def backward(g):
        gxhat = g * gamma.data
        gx = inv / n * (n * gxhat - gxhat.sum(-1, keepdims=True) - xhat * (gxhat * xhat).sum(-1, keepdims=True))
        lead = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return Tensor._record(out, (x, gamma, beta), backward)


def batchnorm3d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.9,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel normalization of a (B, C, H, W, D) tensor.

    In training mode the batch statistics are used and the running buffers are
    updated in place as ``momentum * running + (1 - momentum) * batch``.
    """
    if isinstance(running_mean, Tensor):
        running_mean = running_mean.data
    if isinstance(running_var, Tensor):
        running_var = running_var.data
    axes = (0, 2, 3, 4)
    bshape = (1, -1, 1, 1, 1)
    n = x.shape[0] * x.shape[2] * x.shape[3] * x.shape[4]
    if training:
        if n < 2:
            raise ValueError("batchnorm3d in training mode needs at least 2 values per channel")
        mu = x.data.mean(axis=axes)
        xc = x.data - mu.reshape(bshape)
        var = (xc * xc).mean(axis=axes)
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mu
        running_var *= momentum
        running_var += (1.0 - momentum) * var
    else:
        xc = x.data - running_mean.reshape(bshape)
        var = running_var
    inv = (1.0 / np.sqrt(var + eps)).astype(x.dtype).reshape(bshape)
    xhat = xc * inv
    g_ = gamma.data.reshape(bshape)
    out = xhat * g_ + beta.data.reshape(bshape)

    def backward(g):
        gxhat = g * g_
        if training:
            gx = inv / n * (
                n * gxhat
                - gxhat.sum(axis=axes, keepdims=True)
                - xhat * (gxhat * xhat).sum(axis=axes, keepdims=True)
            )
        else:
            gx = gxhat * inv
        return gx, (g * xhat).sum(axis=axes), g.sum(axis=axes)

    return Tensor._record(out, (x, gamma, beta), backward)


# -- Tensor operator overloads --------------------------------------------

def _rsub(a, b):
    return sub(_lift(b, a), a)


def _rdiv(a, b):
    return div(_lift(b, a), a)


Tensor.__add__ = add
Tensor.__radd__ = add
Tensor.__sub__ = sub
Tensor.__rsub__ = _rsub
Tensor.__mul__ = mul
Tensor.__rmul__ = mul
Tensor.__truediv__ = div
Tensor.__rtruediv__ = _rdiv
Tensor.__neg__ = neg
Tensor.__pow__ = power
Tensor.__matmul__ = matmul
Tensor.__getitem__ = getitem
Tensor.reshape = lambda self, *shape: reshape(self, shape[0] if len(shape) == 1 else shape)
Tensor.transpose = lambda self, *axes: transpose(self, axes[0] if len(axes) == 1 else axes)
Tensor.sum = lambda self, axis=None, keepdims=False: sum(self, axis, keepdims)
Tensor.mean = lambda self, axis=None, keepdims=False: mean(self, axis, keepdims)
