"""Encoder, projection bank, shared part decoder and the assembled network."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..autodiff import functional as F
from ..autodiff.nn import BatchNorm3d, Conv3d, Deconv3d, Module, Parameter
from ..autodiff.tensor import Tensor, as_tensor
from .assembly import apply_transform, compose_shape
from .heads import HeadOutput, build_head

SLOPE = 0.2


@dataclass
class ModelConfig:
    n_parts: int = 4
    resolution: int = 32
    enc_channels: tuple[int, ...] = (64, 128, 256)
    latent_dim: int = 256
    head_mode: str = "part_attention"
    layer_indices: tuple[int, ...] = (0, 3, 5)
    d_a: int = 256
    heads: int = 8
    blocks: int = 3
    ff_mult: int = 4
    head_hidden: int = 256
    mlp_hidden: tuple[int, ...] = (1024, 256)
    bank_noise: float = 0.01
    dtype: str = "f32"

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "f32" else np.float64

    def tap_shapes(self) -> dict[int, tuple[int, int]]:
        """Feature layer index -> (channels, spatial extent)."""
        shapes = {0: (1, self.latent_dim), 1: (self.latent_dim, 1)}
        chans = list(reversed(self.enc_channels)) + [1]
        extent = 4
        shapes[2] = (chans[0], extent)
        for i, c in enumerate(chans[1:], start=3):
            extent *= 2
            shapes[i] = (c, extent)
        return shapes

    def validate(self) -> None:
        n_down = len(self.enc_channels)
        if self.resolution != 4 * 2 ** n_down:
            raise ValueError(
                f"resolution {self.resolution} needs {int(math.log2(self.resolution)) - 2} strided "
                f"encoder layers, got {n_down}"
            )
        taps = self.tap_shapes()
        bad = [i for i in self.layer_indices if i not in taps]
        if bad or not self.layer_indices:
            raise ValueError(f"layer_indices must be a non-empty subset of {sorted(taps)}, got {self.layer_indices}")


class Encoder(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        dt = cfg.np_dtype
        self.resolution = cfg.resolution
        self.convs, self.norms = [], []
        prev = 1
        for c in cfg.enc_channels:
            self.convs.append(Conv3d(prev, c, 2, 1, rng, dt))
            self.norms.append(BatchNorm3d(c, dt))
            prev = c
        self.final = Conv3d(prev, cfg.latent_dim, 1, 0, rng, dt)

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim != 5 or x.shape[1:] != (1, *(self.resolution,) * 3):
            raise ValueError(
                f"encoder expects (B, 1, {self.resolution}, {self.resolution}, {self.resolution}), got {x.shape}"
            )
        for conv, norm in zip(self.convs, self.norms):
            x = F.leaky_relu(norm(conv(x)), SLOPE)
        x = F.leaky_relu(self.final(x), SLOPE)
        return F.reshape(x, (x.shape[0], -1))


class ProjectionBank(Module):
    """Per-part matrices P_i (d x d); part latent i = z @ P_i^T."""

    def __init__(self, n_parts: int, dim: int, rng: np.random.Generator, dtype=np.float32, noise: float = 0.01):
        self.matrices = Parameter(block_partition(n_parts, dim).astype(dtype))
        if noise:
            self.matrices.data += rng.normal(0.0, noise, size=self.matrices.shape).astype(dtype)

    @property
    def n_parts(self) -> int:
        return self.matrices.shape[0]

    def __call__(self, z: Tensor) -> Tensor:
        return project_latents(z, self.matrices)


def block_partition(n_parts: int, dim: int) -> np.ndarray:
    """Exact partition of the identity into diagonal blocks; remainder goes to the last part."""
    size = dim // n_parts
    bank = np.zeros((n_parts, dim, dim))
    for i in range(n_parts):
        lo = i * size
        hi = dim if i == n_parts - 1 else lo + size
        bank[i, np.arange(lo, hi), np.arange(lo, hi)] = 1.0
    return bank


def project_latents(z, bank) -> Tensor:
    """(B, d) latents and (N_p, d, d) bank -> (B, N_p, d) part latents."""
    z = as_tensor(z)
    bank = as_tensor(bank)
    b, d = z.shape
    zt = F.reshape(z, (b, 1, 1, d))
    pt = F.transpose(bank, (0, 2, 1))
    return F.reshape(F.matmul(zt, pt), (b, bank.shape[0], d))


class Decoder(Module):
    """Shared part decoder; returns the sigmoid output and feature taps 0..L."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        dt = cfg.np_dtype
        chans = list(reversed(cfg.enc_channels)) + [1]
        self.first = Deconv3d(cfg.latent_dim, chans[0], 1, 0, rng, dt)
        self.first_norm = BatchNorm3d(chans[0], dt)
        self.deconvs, self.norms = [], []
        for c_in, c_out in zip(chans[:-1], chans[1:]):
            self.deconvs.append(Deconv3d(c_in, c_out, 2, 1, rng, dt))
            if c_out != 1:
                self.norms.append(BatchNorm3d(c_out, dt))

    def __call__(self, z: Tensor) -> tuple[Tensor, list[Tensor]]:
        m, d = z.shape
        taps = [F.reshape(z, (m, 1, d))]
        x = F.reshape(z, (m, d, 1, 1, 1))
        taps.append(x)
        x = F.leaky_relu(self.first_norm(self.first(x)), SLOPE)
        taps.append(x)
        for i, deconv in enumerate(self.deconvs):
            x = deconv(x)
            if i < len(self.norms):
                x = F.leaky_relu(self.norms[i](x), SLOPE)
            else:
                x = F.sigmoid(x)
            taps.append(x)
        return x, taps


@dataclass
class Forward:
    latent: Tensor
    part_latents: Tensor
    canonical: Tensor  # (B, N_p, R, R, R)
    taps: dict[int, Tensor] = field(default_factory=dict)  # layer -> (B, N_p, C, H*W*D)
    head: HeadOutput | None = None
    placed: Tensor | None = None
    shape: Tensor | None = None


class VoxAttention(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        cfg.validate()
        self.cfg = cfg
        self.encoder = Encoder(cfg, rng)
        self.bank = ProjectionBank(cfg.n_parts, cfg.latent_dim, rng, cfg.np_dtype, cfg.bank_noise)
        self.decoder = Decoder(cfg, rng)
        self.head = build_head(cfg, rng)
        self.assign_names()

    @property
    def autoencoder_modules(self) -> list[Module]:
        return [self.encoder, self.bank, self.decoder]

    def encode(self, x) -> Tensor:
        return self.encoder(as_tensor(x, dtype=self.cfg.np_dtype))

    def project(self, z) -> Tensor:
        return self.bank(z)

    def decode(self, part_latents: Tensor, layers=None) -> tuple[Tensor, dict[int, Tensor]]:
        b, n, d = part_latents.shape
        r = self.cfg.resolution
        out, taps = self.decoder(F.reshape(part_latents, (b * n, d)))
        layers = self.cfg.layer_indices if layers is None else layers
        grouped = {}
        for i in layers:
            t = taps[i]
            grouped[i] = F.reshape(t, (b, n, t.shape[1], -1))
        return F.reshape(out, (b, n, r, r, r)), grouped

    def regress(self, taps: dict[int, Tensor]) -> HeadOutput:
        return self.head(taps)

    def assemble(self, canonical: Tensor, transforms: Tensor) -> tuple[Tensor, Tensor]:
        placed = apply_transform(canonical, transforms)
        return placed, compose_shape(placed, axis=1)

    def forward_from_parts(self, part_latents: Tensor, z: Tensor | None = None, with_head: bool = True) -> Forward:
        canonical, taps = self.decode(part_latents)
        fwd = Forward(z, part_latents, canonical, taps)
        if with_head:
            fwd.head = self.regress(taps)
            fwd.placed, fwd.shape = self.assemble(canonical, fwd.head.transforms)
        return fwd

    def __call__(self, x, with_head: bool = True) -> Forward:
        z = self.encode(x)
        return self.forward_from_parts(self.project(z), z, with_head)
