"""Dataset manifests and the seeded train/test split.

Manifest text format (UTF-8, tab separated)::

    category<TAB>N_p<TAB>R<TAB>seed
    item_id<TAB>train|test
    ...
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

SPLITS = ("train", "test")


class ManifestError(ValueError):
    pass


@dataclass
class DatasetManifest:
    category: str
    n_parts: int
    resolution: int
    seed: int
    items: list[tuple[str, str]] = field(default_factory=list)  # (item_id, split)

    def ids(self, split: str | None = None) -> list[str]:
        return [i for i, s in self.items if split is None or s == split]

    def dumps(self) -> str:
        lines = [f"{self.category}\t{self.n_parts}\t{self.resolution}\t{self.seed}"]
        lines += [f"{item}\t{split}" for item, split in self.items]
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def loads(cls, text: str) -> "DatasetManifest":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ManifestError("empty manifest")
        head = lines[0].split("\t")
        if len(head) != 4:
            raise ManifestError("header must be category<TAB>N_p<TAB>R<TAB>seed")
        try:
            man = cls(head[0], int(head[1]), int(head[2]), int(head[3]))
        except ValueError as exc:
            raise ManifestError(f"bad header: {exc}") from None
        for n, ln in enumerate(lines[1:], start=2):
            parts = ln.split("\t")
            if len(parts) != 2 or parts[1] not in SPLITS:
                raise ManifestError(f"line {n}: expected item_id<TAB>train|test, got {ln!r}")
            man.items.append((parts[0], parts[1]))
        return man

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def split_dataset(manifest: DatasetManifest, ratio: float = 0.8, seed: int | None = None) -> DatasetManifest:
    """Shuffle item ids with the seed and tag the first ``round(ratio * n)`` as train.

    The result depends only on the sorted item ids, the ratio and the seed.
    """
    ids = sorted({i for i, _ in manifest.items})
    if not ids:
        raise ManifestError("cannot split an empty dataset")
    if len(ids) < 2:
        raise ManifestError("need at least 2 items to split")
    if not 0.0 < ratio <= 1.0:
        raise ManifestError(f"split ratio must be in (0, 1], got {ratio}")
    seed = manifest.seed if seed is None else seed
    order = np.random.default_rng(seed).permutation(len(ids))
    n_train = int(round(ratio * len(ids)))
    items = [(ids[j], "train" if rank < n_train else "test") for rank, j in enumerate(order)]
    return replace(manifest, seed=seed, items=items)
