"""VXP labeled voxel grid files.

Layout (little-endian)::

    b"VXP1"              magic
    u8   version = 1
    u32  resolution R
    u8   n_parts
    u8   category length, then that many UTF-8 bytes
    R^3  label bytes, x slowest (index = x*R*R + y*R + z)
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"VXP1"
VERSION = 1


class VxpFormatError(ValueError):
    def __init__(self, msg: str, offset: int):
        super().__init__(f"{msg} (byte offset {offset})")
        self.offset = offset


@dataclass
class LabeledVoxelGrid:
    labels: np.ndarray  # (R, R, R) uint8, 0 = empty, 1..n_parts = part id
    n_parts: int
    category: str = ""
    item_id: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def resolution(self) -> int:
        return self.labels.shape[0]

    def occupancy(self) -> np.ndarray:
        return (self.labels > 0).astype(np.float32)

    def part_mask(self, part: int) -> np.ndarray:
        return self.labels == part


def encode_vxp(grid: LabeledVoxelGrid) -> bytes:
    labels = np.ascontiguousarray(grid.labels, dtype=np.uint8)
    r = labels.shape[0]
    if labels.shape != (r, r, r):
        raise ValueError(f"labels must be a cube, got {labels.shape}")
    if labels.max(initial=0) > grid.n_parts:
        raise ValueError(f"label {int(labels.max())} exceeds n_parts={grid.n_parts}")
    cat = grid.category.encode("utf-8")
    if len(cat) > 255:
        raise ValueError("category name longer than 255 bytes")
    header = MAGIC + struct.pack("<BIBB", VERSION, r, grid.n_parts, len(cat)) + cat
    return header + labels.tobytes(order="C")


def decode_vxp(buf: bytes, item_id: str = "") -> LabeledVoxelGrid:
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise VxpFormatError("bad magic, expected b'VXP1'", 0)
    if len(buf) < 11:
        raise VxpFormatError("truncated header", len(buf))
    version, r, n_parts, cat_len = struct.unpack_from("<BIBB", buf, 4)
    if version != VERSION:
        raise VxpFormatError(f"unsupported version {version}", 4)
    if r == 0:
        raise VxpFormatError("resolution must be positive", 5)
    start = 11 + cat_len
    if len(buf) < start:
        raise VxpFormatError("truncated category string", len(buf))
    try:
        category = buf[11:start].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise VxpFormatError("category is not valid UTF-8", 11 + exc.start) from None
    n = r ** 3
    if len(buf) < start + n:
        raise VxpFormatError(f"truncated payload: need {n} label bytes, have {len(buf) - start}", len(buf))
    if len(buf) > start + n:
        raise VxpFormatError("trailing bytes after label payload", start + n)
    labels = np.frombuffer(buf, dtype=np.uint8, count=n, offset=start)
    bad = np.flatnonzero(labels > n_parts)
    if bad.size:
        raise VxpFormatError(f"label {int(labels[bad[0]])} exceeds n_parts={n_parts}", start + int(bad[0]))
    return LabeledVoxelGrid(labels.reshape(r, r, r).copy(), n_parts, category, item_id)


def write_vxp(grid: LabeledVoxelGrid, path) -> None:
    Path(path).write_bytes(encode_vxp(grid))


def read_vxp(path) -> LabeledVoxelGrid:
    path = Path(path)
    return decode_vxp(path.read_bytes(), item_id=path.stem)
