"""Transformation heads: simple MLP, part attention, channel-wise part attention.

Every head maps the decoder feature taps of the N_p parts to one 6-vector per
part (three scales, three translations). Scales come out as exp(raw) so they
are always positive.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ..autodiff import functional as F
from ..autodiff.attention import AttentionBlock
from ..autodiff.nn import Dense, Module
from ..autodiff.tensor import Tensor

TRANSFORM_DIM = 6
HEAD_MODES = ("simple_mlp", "part_attention", "channelwise_part_attention")


@dataclass
class HeadOutput:
    transforms: Tensor  # (B, N_p, 6)
    ac_vectors: list[Tensor] = field(default_factory=list)  # per layer (B, N_p, d_A)
    attn_maps: dict[int, list[np.ndarray]] = field(default_factory=dict)  # layer -> per block (B, heads, N_p, N_p)


def tap_dims(cfg) -> dict[int, tuple[int, int]]:
    """Feature layer -> (channels, flattened spatial size)."""
    dims = {}
    for i, (c, ext) in cfg.tap_shapes().items():
        dims[i] = (c, ext) if i == 0 else (c, ext ** 3)
    return dims


def _to_transform(raw: Tensor) -> Tensor:
    scales = F.exp(raw[..., :3])
    return F.concat([scales, raw[..., 3:]], axis=-1)


class SimpleMLPHead(Module):
    def __init__(self, cfg, rng: np.random.Generator):
        dt = cfg.np_dtype
        dims = tap_dims(cfg)
        self.layers = tuple(cfg.layer_indices)
        self.n_parts = cfg.n_parts
        width = cfg.n_parts * sum(dims[i][0] * dims[i][1] for i in self.layers)
        self.hidden = []
        for h in cfg.mlp_hidden:
            self.hidden.append(Dense(width, h, rng, dt))
            width = h
        self.out = Dense(width, cfg.n_parts * TRANSFORM_DIM, rng, dt)

    def __call__(self, taps: dict[int, Tensor]) -> HeadOutput:
        b = taps[self.layers[0]].shape[0]
        x = F.concat([F.reshape(taps[i], (b, -1)) for i in self.layers], axis=1)
        for layer in self.hidden:
            x = F.leaky_relu(layer(x), 0.2)
        raw = F.reshape(self.out(x), (b, self.n_parts, TRANSFORM_DIM))
        return HeadOutput(_to_transform(raw))


class _AttentionHeadBase(Module):
    """Shared pieces: per-layer embeddings, one stack of attention blocks, per-part MLP."""

    channelwise = False

    def __init__(self, cfg, rng: np.random.Generator):
        dt = cfg.np_dtype
        dims = tap_dims(cfg)
        self.layers = tuple(cfg.layer_indices)
        self.embed = {}
        for i in self.layers:
            c, size = dims[i]
            self.embed[str(i)] = Dense(size if self.channelwise else c * size, cfg.d_a, rng, dt)
        self.blocks = [AttentionBlock(cfg.d_a, cfg.heads, rng, dt, cfg.ff_mult) for _ in range(cfg.blocks)]
        per_layer = [dims[i][0] * cfg.d_a if self.channelwise else cfg.d_a for i in self.layers]
        self.mlp1 = Dense(sum(per_layer), cfg.head_hidden, rng, dt)
        self.mlp2 = Dense(cfg.head_hidden, TRANSFORM_DIM, rng, dt)

    def _attend(self, x: Tensor) -> tuple[Tensor, list[np.ndarray]]:
        maps = []
        for block in self.blocks:
            x, attn = block(x)
            maps.append(attn.data)
        return x, maps

    def _regress(self, per_part: list[Tensor]) -> Tensor:
        x = F.concat(per_part, axis=-1) if len(per_part) > 1 else per_part[0]
        return _to_transform(self.mlp2(F.leaky_relu(self.mlp1(x), 0.2)))


class PartAttentionHead(_AttentionHeadBase):
    def __call__(self, taps: dict[int, Tensor]) -> HeadOutput:
        outs, maps = [], {}
        for i in self.layers:
            t = taps[i]
            b, n = t.shape[:2]
            x = self.embed[str(i)](F.reshape(t, (b, n, -1)))
            x, maps[i] = self._attend(x)
            outs.append(x)
        return HeadOutput(self._regress(outs), outs, maps)


class ChannelwisePartAttentionHead(_AttentionHeadBase):
    channelwise = True

    def __init__(self, cfg, rng: np.random.Generator):
        big = [i for i in cfg.layer_indices if i in (1, 2)]
        if big:
            warnings.warn(
                f"channel-wise attention on feature layer(s) {big} runs one attention stack per "
                "channel and needs a lot of memory",
                ResourceWarning,
                stacklevel=3,
            )
        super().__init__(cfg, rng)

    def __call__(self, taps: dict[int, Tensor]) -> HeadOutput:
        outs, ac, maps = [], [], {}
        for i in self.layers:
            t = taps[i]  # (B, N_p, C, HWD)
            b, n, c, _ = t.shape
            x = self.embed[str(i)](F.transpose(t, (0, 2, 1, 3)))  # (B, C, N_p, d_A)
            x, layer_maps = self._attend(x)
            maps[i] = [m.mean(axis=1) for m in layer_maps]
            ac.append(F.mean(x, axis=1))
            outs.append(F.reshape(F.transpose(x, (0, 2, 1, 3)), (b, n, -1)))
        return HeadOutput(self._regress(outs), ac, maps)


def build_head(cfg, rng: np.random.Generator) -> Module:
    if cfg.head_mode == "simple_mlp":
        return SimpleMLPHead(cfg, rng)
    if cfg.head_mode == "part_attention":
        return PartAttentionHead(cfg, rng)
    if cfg.head_mode == "channelwise_part_attention":
        return ChannelwisePartAttentionHead(cfg, rng)
    raise ValueError(f"unknown head mode {cfg.head_mode!r}; choose from {HEAD_MODES}")
