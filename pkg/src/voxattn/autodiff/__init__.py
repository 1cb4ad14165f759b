"""Minimal reverse-mode tensor engine for the voxel networks."""
from . import functional
from .attention import AttentionBlock, MultiHeadAttention, attention_block, multi_head_attention
from .conv import conv3d, deconv3d
from .functional import activation, batchnorm3d, dense, layer_norm
from .gradcheck import GradCheckError, grad_check
from .nn import BatchNorm3d, Conv3d, Deconv3d, Dense, LayerNorm, Module, Parameter
from .optim import AdamState, MissingGradientError, adam_step
from .tensor import Tensor, as_tensor, is_grad_enabled, no_grad

__all__ = [
    "AdamState", "AttentionBlock", "BatchNorm3d", "Conv3d", "Deconv3d", "Dense", "GradCheckError",
    "LayerNorm", "MissingGradientError", "Module", "MultiHeadAttention", "Parameter", "Tensor",
    "activation", "adam_step", "as_tensor", "attention_block", "batchnorm3d", "conv3d", "deconv3d",
    "dense", "functional", "grad_check", "is_grad_enabled", "layer_norm", "multi_head_attention",
    "no_grad",
]
