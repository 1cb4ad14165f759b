import itertools
import warnings

import numpy as np
import pytest

from conftest import tiny_model_config
from voxattn.autodiff import Tensor, grad_check, no_grad
from voxattn.autodiff import functional as F
from voxattn.model import (
    ChannelwisePartAttentionHead,
    ModelConfig,
    PartAttentionHead,
    TransformError,
    VoxAttention,
    apply_transform,
    block_partition,
    compose_shape,
    tap_dims,
)


def encoder_trace(model, x):
    enc = model.encoder
    shapes = [x.shape]
    for conv, norm in zip(enc.convs, enc.norms):
        x = F.leaky_relu(norm(conv(x)), 0.2)
        shapes.append(x.shape)
    x = enc.final(x)
    shapes.append(x.shape)
    shapes.append(F.reshape(x, (x.shape[0], -1)).shape)
    return shapes


@pytest.fixture(scope="module")
def full_model():
    return VoxAttention(ModelConfig(), np.random.default_rng(0))


@pytest.mark.parametrize("batch", [1, 3])
def test_full_size_shape_trace(full_model, batch):
    x = Tensor(np.zeros((batch, 1, 32, 32, 32), np.float32))
    full_model.eval()
    with no_grad():
        trace = encoder_trace(full_model, x)
        fwd = full_model(x)
    assert trace == [
        (batch, 1, 32, 32, 32),
        (batch, 64, 16, 16, 16),
        (batch, 128, 8, 8, 8),
        (batch, 256, 4, 4, 4),
        (batch, 256, 1, 1, 1),
        (batch, 256),
    ]
    _, taps = full_model.decoder(F.reshape(fwd.part_latents, (batch * 4, 256)))
    assert [t.shape[1:] for t in taps] == [
        (1, 256), (256, 1, 1, 1), (256, 4, 4, 4), (128, 8, 8, 8), (64, 16, 16, 16), (1, 32, 32, 32),
    ]
    assert fwd.part_latents.shape == (batch, 4, 256)
    assert fwd.canonical.shape == (batch, 4, 32, 32, 32)
    assert fwd.head.transforms.shape == (batch, 4, 6)
    assert fwd.shape.shape == (batch, 32, 32, 32)
    assert {k: v.shape for k, v in fwd.taps.items()} == {
        0: (batch, 4, 1, 256), 3: (batch, 4, 128, 512), 5: (batch, 4, 1, 32768),
    }
    assert (fwd.head.transforms.data[..., :3] > 0).all()


def test_config_validation():
    with pytest.raises(ValueError, match="strided"):
        VoxAttention(ModelConfig(resolution=16), np.random.default_rng(0))
    with pytest.raises(ValueError, match="layer_indices"):
        VoxAttention(tiny_model_config(layer_indices=(7,)), np.random.default_rng(0))
    with pytest.raises(ValueError, match="head mode"):
        VoxAttention(tiny_model_config(head_mode="bogus"), np.random.default_rng(0))


def test_bank_initialisation():
    model = VoxAttention(tiny_model_config(bank_noise=0.01), np.random.default_rng(3))
    dev = model.bank.matrices.data - block_partition(4, 8)
    assert 0.003 < dev.std() < 0.03
    exact = VoxAttention(tiny_model_config(bank_noise=0.0), np.random.default_rng(3))
    np.testing.assert_array_equal(exact.bank.matrices.data, block_partition(4, 8))
    z = np.random.default_rng(1).normal(size=(2, 8))
    parts = exact.project(Tensor(z)).data
    np.testing.assert_allclose(parts.sum(axis=1), z, atol=1e-12)


def random_taps(cfg, rng, batch=2):
    dims = tap_dims(cfg)
    return {i: rng.normal(size=(batch, cfg.n_parts, *dims[i])) for i in cfg.layer_indices}


@pytest.mark.parametrize("mode", ["part_attention", "channelwise_part_attention"])
def test_heads_permutation_equivariant(mode, rng):
    cfg = tiny_model_config(head_mode=mode, enc_channels=(8,), layer_indices=(0, 3))
    model = VoxAttention(cfg, np.random.default_rng(5))
    taps = random_taps(cfg, rng)
    with no_grad():
        base = model.regress({i: Tensor(t) for i, t in taps.items()}).transforms.data
        worst = 0.0
        for perm in itertools.permutations(range(4)):
            perm = list(perm)
            out = model.regress({i: Tensor(t[:, perm]) for i, t in taps.items()}).transforms.data
            worst = max(worst, np.abs(out - base[:, perm]).max())
    assert worst < 1e-5


def test_simple_mlp_is_not_equivariant(rng):
    cfg = tiny_model_config(head_mode="simple_mlp", layer_indices=(0,))
    model = VoxAttention(cfg, np.random.default_rng(5))
    taps = random_taps(cfg, rng)
    with no_grad():
        base = model.regress({0: Tensor(taps[0])}).transforms.data
        out = model.regress({0: Tensor(taps[0][:, [1, 0, 2, 3]])}).transforms.data
    assert np.abs(out - base[:, [1, 0, 2, 3]]).max() > 1e-6


def test_channelwise_matches_part_attention_on_last_layer(rng):
    cfg_pa = tiny_model_config(head_mode="part_attention", layer_indices=(3,))
    cfg_cw = tiny_model_config(head_mode="channelwise_part_attention", layer_indices=(3,))
    pa = PartAttentionHead(cfg_pa, np.random.default_rng(1))
    cw = ChannelwisePartAttentionHead(cfg_cw, np.random.default_rng(2))
    src = dict(pa.named_parameters())
    for name, p in cw.named_parameters():
        assert src[name].shape == p.shape
        p.data[...] = src[name].data
    taps = {3: Tensor(rng.normal(size=(3, 4, 1, 512)))}
    with no_grad():
        a, b = pa(taps), cw(taps)
    assert np.abs(a.transforms.data - b.transforms.data).max() < 1e-6
    for ma, mb in zip(a.attn_maps[3], b.attn_maps[3]):
        assert np.abs(ma - mb).max() < 1e-6


def test_channelwise_memory_warning():
    with pytest.warns(ResourceWarning):
        VoxAttention(tiny_model_config(head_mode="channelwise_part_attention", layer_indices=(2,)),
                     np.random.default_rng(0))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        VoxAttention(tiny_model_config(head_mode="channelwise_part_attention", layer_indices=(0, 3)),
                     np.random.default_rng(0))


def test_attention_maps_are_row_stochastic(rng):
    cfg = tiny_model_config()
    model = VoxAttention(cfg, np.random.default_rng(0))
    out = model.regress({i: Tensor(t) for i, t in random_taps(cfg, rng).items()})
    for maps in out.attn_maps.values():
        assert len(maps) == cfg.blocks
        for m in maps:
            assert m.shape == (2, cfg.heads, 4, 4)
            np.testing.assert_allclose(m.sum(-1), 1.0, atol=1e-12)
    assert len(out.ac_vectors) == len(cfg.layer_indices)


# ---------------------------------------------------------------- assembly


def test_identity_transform_is_exact(rng):
    grid = rng.random((2, 8, 8, 8))
    ident = np.tile([1.0, 1, 1, 0, 0, 0], (2, 1))
    np.testing.assert_allclose(apply_transform(grid, ident).data, grid, atol=1e-12)


def test_whole_voxel_translation_and_half_scale():
    grid = np.zeros((8, 8, 8))
    grid[2, 3, 4] = 1.0
    out = apply_transform(grid, [1, 1, 1, 1 / 8, 0, -2 / 8]).data
    expected = np.zeros_like(grid)
    expected[3, 3, 2] = 1.0
    np.testing.assert_allclose(out, expected, atol=1e-12)
    full = apply_transform(np.ones((8, 8, 8)), [0.5, 0.5, 0.5, 0, 0, 0]).data
    assert np.allclose(full[2:6, 2:6, 2:6], 1.0)
    assert full.sum() == pytest.approx(64.0)


def test_apply_transform_gradients(rng):
    canon = Tensor(rng.random((2, 3, 6, 6, 6)), requires_grad=True)
    # non-integer sample positions keep the trilinear weights away from their kinks
    tf = np.concatenate([rng.uniform(0.55, 0.95, (2, 3, 3)), rng.uniform(-0.2, 0.2, (2, 3, 3))], axis=-1)
    tf = Tensor(tf, requires_grad=True)
    weights = rng.normal(size=(2, 3, 6, 6, 6))
    assert grad_check(lambda: F.sum(F.mul(apply_transform(canon, tf), weights)), [canon, tf]) < 1e-6


def test_apply_transform_guards():
    with pytest.raises(TransformError):
        apply_transform(np.zeros((4, 4, 4)), [0, 1, 1, 0, 0, 0])
    with pytest.raises(ValueError):
        apply_transform(np.zeros((2, 4, 4, 4)), [1, 1, 1, 0, 0, 0])


def test_compose_is_union(rng):
    placed = Tensor(rng.random((2, 4, 3, 3, 3)), requires_grad=True)
    out = compose_shape(placed)
    np.testing.assert_array_equal(out.data, placed.data.max(axis=1))
    weights = rng.normal(size=out.shape)
    assert grad_check(lambda: F.sum(F.mul(compose_shape(placed), weights)), [placed]) < 1e-6
