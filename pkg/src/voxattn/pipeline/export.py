"""Shape export: VXP, one OBJ cube per occupied voxel, ASCII z-slices."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from ..data.vxp import LabeledVoxelGrid, write_vxp

FORMATS = ("vxp", "obj-cubes", "ascii-slices")

# unit cube corners and its six quads (1-based offsets into the corners, outward winding)
_CORNERS = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], dtype=np.int64)
_FACES = (
    (1, 2, 4, 3),
    (5, 7, 8, 6),
    (1, 5, 6, 2),
    (3, 4, 8, 7),
    (1, 3, 7, 5),
    (2, 6, 8, 4),
)


def obj_cubes(occ, threshold: float = 0.5) -> str:
    cells = np.argwhere(np.asarray(occ) >= threshold)
    lines = [f"# voxel cubes: {len(cells)}"]
    for c in cells:
        for v in c + _CORNERS:
            lines.append(f"v {v[0]} {v[1]} {v[2]}")
    for k in range(len(cells)):
        base = 8 * k
        for f in _FACES:
            lines.append("f " + " ".join(str(base + i) for i in f))
    return "\n".join(lines) + "\n"


def ascii_slices(occ, threshold: float = 0.5) -> str:
    """One block per z index; rows run over y (top = high y), columns over x."""
    m = np.asarray(occ) >= threshold
    blocks = []
    for z in range(m.shape[2]):
        rows = ["".join("#" if m[x, y, z] else "." for x in range(m.shape[0])) for y in reversed(range(m.shape[1]))]
        blocks.append(f"z={z}\n" + "\n".join(rows))
    return "\n\n".join(blocks) + "\n"


def export_shape(occ, path, fmt: str = "obj-cubes", labels=None, category: str = "", item_id: str = "", n_parts: int | None = None) -> None:
    """Write an occupancy grid (or, for VXP, a label grid if given) to ``path``."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown export format {fmt!r}; choose from {FORMATS}")
    path = Path(path)
    if not path.parent.exists():
        raise OSError(f"cannot write {path}: directory {path.parent} does not exist")
    if fmt == "vxp":
        if labels is None:
            labels = (np.asarray(occ) >= 0.5).astype(np.uint8)
        labels = np.asarray(labels, dtype=np.uint8)
        n_parts = n_parts or max(int(labels.max()), 1)
        write_vxp(LabeledVoxelGrid(labels, n_parts, category, item_id), path)
    elif fmt == "obj-cubes":
        path.write_text(obj_cubes(occ), encoding="utf-8")
    else:
        path.write_text(ascii_slices(occ), encoding="utf-8")


def labels_from_parts(placed: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Label grid from (N_p, R, R, R) placed parts; the first part wins on overlap."""
    placed = np.asarray(placed)
    occ = placed >= threshold
    labels = np.zeros(placed.shape[1:], dtype=np.uint8)
    for j in reversed(range(placed.shape[0])):
        labels[occ[j]] = j + 1
    return labels
