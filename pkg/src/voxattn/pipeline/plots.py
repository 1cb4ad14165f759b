"""Figure rendering for the report commands (files only, no display)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def attention_grid(maps: np.ndarray, path, title: str = "", labels=None) -> None:
    """(blocks, heads, N_p, N_p) weights as a blocks x heads grid of heatmaps."""
    blocks, heads, n, _ = maps.shape
    fig, axes = plt.subplots(blocks, heads, figsize=(1.6 * heads, 1.7 * blocks), squeeze=False)
    for b in range(blocks):
        for h in range(heads):
            ax = axes[b, h]
            ax.imshow(maps[b, h], vmin=0.0, vmax=1.0, cmap="viridis")
            ax.set_xticks([])
            ax.set_yticks([])
            if b == 0:
                ax.set_title(f"head {h}", fontsize=8)
            if h == 0:
                ax.set_ylabel(f"block {b}", fontsize=8)
    if labels is not None and n == len(labels):
        axes[-1, 0].set_xticks(range(n), labels, rotation=90, fontsize=6)
        axes[-1, 0].set_yticks(range(n), labels, fontsize=6)
    if title:
        fig.suptitle(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def shape_projections(occ: np.ndarray, path, title: str = "") -> None:
    """Max projections of an occupancy grid along each axis."""
    occ = np.asarray(occ) >= 0.5
    fig, axes = plt.subplots(1, 3, figsize=(7.5, 2.8))
    for ax, axis, name in zip(axes, range(3), "xyz"):
        ax.imshow(occ.max(axis=axis).T, origin="lower", cmap="Greys", vmin=0, vmax=1)
        ax.set_title(f"along {name}", fontsize=9)
        ax.set_xticks([])
        ax.set_yticks([])
    if title:
        fig.suptitle(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
