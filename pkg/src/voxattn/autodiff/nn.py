"""Parameter containers and the layers the network is built from."""
from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from . import functional as F
from .conv import conv3d, deconv3d
from .tensor import Tensor


class Parameter(Tensor):
    """Trainable tensor with Adam moment buffers.

    Frozen parameters still receive gradients during backward but are skipped
    by the optimizer.
    """

    __slots__ = ("name", "frozen", "adam_m", "adam_v")

    def __init__(self, data, name: str = "", dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.name = name
        self.frozen = False
        self.adam_m = np.zeros_like(self.data)
        self.adam_v = np.zeros_like(self.data)


class Module:
    training = True

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for key, val in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(val, Parameter):
                yield name, val
            elif isinstance(val, Module):
                yield from val.named_parameters(name + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")
            elif isinstance(val, dict):
                for k, item in val.items():
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{k}.")

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for key, val in vars(self).items():
            name = f"{prefix}{key}"
            if key.startswith("running_") and isinstance(val, np.ndarray):
                yield name, val
            elif isinstance(val, Module):
                yield from val.named_buffers(name + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_buffers(f"{name}.{i}.")
            elif isinstance(val, dict):
                for k, item in val.items():
                    if isinstance(item, Module):
                        yield from item.named_buffers(f"{name}.{k}.")

    def modules(self) -> Iterator["Module"]:
        yield self
        for val in vars(self).values():
            items = val.values() if isinstance(val, dict) else val if isinstance(val, (list, tuple)) else [val]
            for item in items:
                if isinstance(item, Module):
                    yield from item.modules()

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def set_frozen(self, frozen: bool) -> None:
        for p in self.parameters():
            p.frozen = frozen

    def assign_names(self, prefix: str = "") -> None:
        for name, p in self.named_parameters(prefix):
            p.name = name


def _uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Dense(Module):
    def __init__(self, f_in: int, f_out: int, rng: np.random.Generator, dtype=np.float32):
        self.weight = Parameter(_uniform(rng, (f_out, f_in), f_in, dtype))
        self.bias = Parameter(np.zeros(f_out, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return F.dense(x, self.weight, self.bias)


class Conv3d(Module):
    def __init__(self, c_in: int, c_out: int, stride: int, padding: int, rng, dtype=np.float32, k: int = 4):
        self.stride, self.padding = stride, padding
        self.weight = Parameter(_uniform(rng, (c_out, c_in, k, k, k), c_in * k ** 3, dtype))
        self.bias = Parameter(np.zeros(c_out, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return conv3d(x, self.weight, self.bias, self.stride, self.padding)


class Deconv3d(Module):
    def __init__(self, c_in: int, c_out: int, stride: int, padding: int, rng, dtype=np.float32, k: int = 4):
        self.stride, self.padding = stride, padding
        # each output voxel sees about c_in * (k / stride)^3 inputs
        fan_in = max(1, c_in * (k // stride) ** 3)
        self.weight = Parameter(_uniform(rng, (c_in, c_out, k, k, k), fan_in, dtype))
        self.bias = Parameter(np.zeros(c_out, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return deconv3d(x, self.weight, self.bias, self.stride, self.padding)


class BatchNorm3d(Module):
    def __init__(self, channels: int, dtype=np.float32, momentum: float = 0.9, eps: float = 1e-5):
        self.momentum, self.eps = momentum, eps
        self.gamma = Parameter(np.ones(channels, dtype=dtype))
        self.beta = Parameter(np.zeros(channels, dtype=dtype))
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return F.batchnorm3d(
            x, self.gamma, self.beta, self.running_mean, self.running_var,
            self.training, self.momentum, self.eps,
        )


class LayerNorm(Module):
    def __init__(self, width: int, dtype=np.float32, eps: float = 1e-5):
        self.eps = eps
        self.gamma = Parameter(np.ones(width, dtype=dtype))
        self.beta = Parameter(np.zeros(width, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return F.layer_norm(x, self.gamma, self.beta, self.eps)
