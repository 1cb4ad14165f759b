"""Multi-head self-attention and the post-norm attention block."""
from __future__ import annotations

import math

import numpy as np

from . import functional as F
from .nn import Dense, LayerNorm, Module
from .tensor import Tensor


class MultiHeadAttention(Module):
    def __init__(self, width: int, heads: int, rng: np.random.Generator, dtype=np.float32):
        if width % heads:
            raise ValueError(f"attention width {width} is not divisible by {heads} heads")
        self.heads = heads
        self.q = Dense(width, width, rng, dtype)
        self.k = Dense(width, width, rng, dtype)
        self.v = Dense(width, width, rng, dtype)
        self.o = Dense(width, width, rng, dtype)

    def __call__(self, x: Tensor) -> tuple[Tensor, Tensor]:
        return multi_head_attention(x, self, self.heads)


def multi_head_attention(x: Tensor, params: MultiHeadAttention, heads: int) -> tuple[Tensor, Tensor]:
    """Self-attention over the second-to-last axis of ``x`` (..., S, d).

    Returns the projected output (..., S, d) and the attention weights
    (..., heads, S, S); every row of the weights sums to one.
    """
    *lead, s, d = x.shape
    if s == 0:
        raise ValueError("multi_head_attention needs at least one token")
    if d % heads:
        raise ValueError(f"width {d} is not divisible by {heads} heads")
    dk = d // heads
    nl = len(lead)

    def split(t: Tensor) -> Tensor:
        t = F.reshape(t, (*lead, s, heads, dk))
        return F.transpose(t, (*range(nl), nl + 1, nl, nl + 2))

    q = split(params.q(x))
    k = split(params.k(x))
    v = split(params.v(x))
    kt = F.transpose(k, (*range(nl + 1), nl + 2, nl + 1))
    scores = F.mul(F.matmul(q, kt), 1.0 / math.sqrt(dk))
    attn = F.softmax(scores, axis=-1)
    ctx = F.matmul(attn, v)
    ctx = F.reshape(F.transpose(ctx, (*range(nl), nl + 1, nl, nl + 2)), (*lead, s, d))
    return params.o(ctx), attn


class AttentionBlock(Module):
    """y = LN(x + MHA(x)); out = LN(y + FF(y)) with FF = dense, leaky-relu, dense."""

    def __init__(self, width: int, heads: int, rng: np.random.Generator, dtype=np.float32, ff_mult: int = 4):
        self.mha = MultiHeadAttention(width, heads, rng, dtype)
        self.norm1 = LayerNorm(width, dtype)
        self.ff1 = Dense(width, ff_mult * width, rng, dtype)
        self.ff2 = Dense(ff_mult * width, width, rng, dtype)
        self.norm2 = LayerNorm(width, dtype)

    def __call__(self, x: Tensor) -> tuple[Tensor, Tensor]:
        a, attn = self.mha(x)
        y = self.norm1(F.add(x, a))
        h = self.ff2(F.leaky_relu(self.ff1(y), 0.2))
        return self.norm2(F.add(y, h)), attn


def attention_block(x: Tensor, params: AttentionBlock) -> Tensor:
    return params(x)[0]
