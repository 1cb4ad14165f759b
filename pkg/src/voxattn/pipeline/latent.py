"""Latent-space editing: part swapping, part mixing and interpolation.

All operations run the network in eval mode and go through the full
decode, regress, assemble path, so the head always sees the edited parts.
Items pass through the network one at a time so that a result never depends
on which other items share its batch.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from ..autodiff.tensor import Tensor, no_grad
from ..model.heads import HeadOutput
from ..model.network import Forward, VoxAttention
from .plots import attention_grid
from .training import PipelineError


class UnsupportedOperation(PipelineError):
    pass


def _occupancy(samples, dtype) -> np.ndarray:
    return np.stack([s.occupancy for s in samples])[:, None].astype(dtype)


def encode(model: VoxAttention, samples) -> np.ndarray:
    model.eval()
    x = _occupancy(samples, model.cfg.np_dtype)
    with no_grad():
        return np.concatenate([model.encode(x[i : i + 1]).data for i in range(len(x))])


def project(model: VoxAttention, z: np.ndarray) -> np.ndarray:
    with no_grad():
        return np.concatenate([model.project(Tensor(z[i : i + 1])).data for i in range(len(z))])


def decode_parts(model: VoxAttention, part_latents: np.ndarray) -> Forward:
    """Full pipeline from (items, N_p, d) part latents."""
    model.eval()
    with no_grad():
        outs = [model.forward_from_parts(Tensor(part_latents[i : i + 1])) for i in range(len(part_latents))]

    def cat(arrays):
        return Tensor(np.concatenate([a.data if isinstance(a, Tensor) else a for a in arrays]))

    fwd = Forward(None, Tensor(part_latents), cat([o.canonical for o in outs]))
    fwd.placed = cat([o.placed for o in outs])
    fwd.shape = cat([o.shape for o in outs])
    maps = {
        layer: [cat([o.head.attn_maps[layer][b] for o in outs]).data for b in range(len(blocks))]
        for layer, blocks in outs[0].head.attn_maps.items()
    }
    fwd.head = HeadOutput(cat([o.head.transforms for o in outs]), [], maps)
    return fwd


def reconstruct(model: VoxAttention, samples) -> Forward:
    return decode_parts(model, project(model, encode(model, samples)))


def swap(model: VoxAttention, item_a, item_b, part: int) -> tuple[Forward, Forward]:
    """Exchange the latent of part ``part`` (0-based) between two items."""
    n = model.cfg.n_parts
    if not 0 <= part < n:
        raise PipelineError(f"part index {part} out of range for {n} parts")
    parts = project(model, encode(model, [item_a, item_b]))
    swapped = parts.copy()
    swapped[0, part], swapped[1, part] = parts[1, part], parts[0, part]
    fwd = decode_parts(model, swapped)
    return _select(fwd, 0), _select(fwd, 1)


def mix(model: VoxAttention, donors) -> Forward:
    """Assemble one shape whose part i comes from ``donors[i]``."""
    n = model.cfg.n_parts
    if len(donors) != n:
        raise PipelineError(f"need one donor per part slot ({n}), got {len(donors)}")
    parts = project(model, encode(model, donors))
    mixed = parts[np.arange(n), np.arange(n)][None]
    return decode_parts(model, mixed)


def random_donors(samples, n_parts: int, seed: int) -> list:
    rng = np.random.default_rng(seed)
    return [samples[i] for i in rng.integers(0, len(samples), size=n_parts)]


def interpolate(model: VoxAttention, item_a, item_b, steps: int) -> tuple[np.ndarray, Forward]:
    """Shapes along z(a) = (1 - a) z_A + a z_B for ``steps`` evenly spaced a in [0, 1]."""
    if steps < 2:
        raise PipelineError(f"interpolation needs at least 2 steps, got {steps}")
    z = encode(model, [item_a, item_b])
    alphas = np.linspace(0.0, 1.0, steps)
    zs = ((1.0 - alphas)[:, None] * z[0] + alphas[:, None] * z[1]).astype(z.dtype)
    return alphas, decode_parts(model, project(model, zs))


def _select(fwd: Forward, i: int) -> Forward:
    def take(t):
        return None if t is None else Tensor(t.data[i : i + 1])

    out = Forward(take(fwd.latent), take(fwd.part_latents), take(fwd.canonical))
    out.placed = take(fwd.placed)
    out.shape = take(fwd.shape)
    out.head = fwd.head
    return out


def attention_maps(model: VoxAttention, item) -> dict[int, np.ndarray]:
    """Layer -> (blocks, heads, N_p, N_p) attention weights for one item."""
    if model.cfg.head_mode == "simple_mlp":
        raise UnsupportedOperation("the simple_mlp head has no attention maps")
    fwd = reconstruct(model, [item])
    return {layer: np.stack([m[0] for m in maps]) for layer, maps in fwd.head.attn_maps.items()}


def export_attention_maps(model: VoxAttention, item, out_dir, part_names=None) -> dict[int, np.ndarray]:
    """Write layer{L}_block{B}_head{H}.csv for every map plus one PNG grid per layer."""
    maps = attention_maps(model, item)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for layer, arr in maps.items():
        for b in range(arr.shape[0]):
            for h in range(arr.shape[1]):
                np.savetxt(out / f"layer{layer}_block{b}_head{h}.csv", arr[b, h], delimiter=",", fmt="%.8f")
        attention_grid(arr, out / f"layer{layer}.png", title=f"feature layer {layer}", labels=part_names)
    return maps
