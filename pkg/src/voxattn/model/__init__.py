"""The part-assembly network."""
from .assembly import TransformError, apply_transform, compose_shape
from .heads import (
    HEAD_MODES,
    TRANSFORM_DIM,
    ChannelwisePartAttentionHead,
    HeadOutput,
    PartAttentionHead,
    SimpleMLPHead,
    build_head,
    tap_dims,
)
from .network import (
    Decoder,
    Encoder,
    Forward,
    ModelConfig,
    ProjectionBank,
    VoxAttention,
    block_partition,
    project_latents,
)

__all__ = [
    "HEAD_MODES", "TRANSFORM_DIM", "ChannelwisePartAttentionHead", "Decoder", "Encoder", "Forward",
    "HeadOutput", "ModelConfig", "PartAttentionHead", "ProjectionBank", "SimpleMLPHead",
    "TransformError", "VoxAttention", "apply_transform", "block_partition", "build_head",
    "compose_shape", "project_latents", "tap_dims",
]
