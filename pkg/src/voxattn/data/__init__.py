"""Labeled voxel datasets: file format, canonical parts, synthetic shapes, splits."""
from .canonical import (
    PartCanonical,
    PartTransform,
    ShapeSample,
    canonicalize_part,
    place_nearest,
    preprocess,
    reassemble_gt,
)
from .manifest import DatasetManifest, ManifestError, split_dataset
from .synth import CATEGORIES, generate_synthetic
from .vxp import LabeledVoxelGrid, VxpFormatError, decode_vxp, encode_vxp, read_vxp, write_vxp

__all__ = [
    "CATEGORIES", "DatasetManifest", "LabeledVoxelGrid", "ManifestError", "PartCanonical",
    "PartTransform", "ShapeSample", "VxpFormatError", "canonicalize_part", "decode_vxp",
    "encode_vxp", "generate_synthetic", "place_nearest", "preprocess", "read_vxp",
    "reassemble_gt", "split_dataset", "write_vxp",
]
