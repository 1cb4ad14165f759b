import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from voxattn.data import DatasetManifest, generate_synthetic, write_vxp  # noqa: E402
from voxattn.model import ModelConfig  # noqa: E402
from voxattn.pipeline import TrainConfig  # noqa: E402

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    prev = ACCEPTANCE.get(criterion)
    if prev is not None:
        ok = ok and prev[0]
        detail = f"{prev[1]}; {detail}"
    ACCEPTANCE[criterion] = (ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def tiny_model_config(**kw) -> ModelConfig:
    base = dict(
        n_parts=4, resolution=8, enc_channels=(4,), latent_dim=8, head_mode="part_attention",
        layer_indices=(0, 2, 3), d_a=8, heads=2, blocks=2, ff_mult=2, head_hidden=8, mlp_hidden=(16,),
        bank_noise=0.01, dtype="f64",
    )
    base.update(kw)
    return ModelConfig(**base)


def small_train_config(root: Path, **kw) -> TrainConfig:
    base = dict(
        resolution=16, enc_channels=(8, 16), latent_dim=32, layer_indices=(0, 2, 4), d_a=16, heads=4,
        blocks=3, head_hidden=32, mlp_hidden=(64,), manifest=str(root / "manifest.txt"), batch_size=4,
        eval_every=2, s1_epochs=4, s2_epochs=4, s3_epochs=2,
    )
    base.update(kw)
    return TrainConfig(**base)


def write_dataset(root: Path, count: int = 6, resolution: int = 16, category: str = "chair", test_every: int = 3):
    root.mkdir(parents=True, exist_ok=True)
    items = []
    for i in range(count):
        grid = generate_synthetic(category, i, resolution)
        grid.item_id = f"{category}_{i:03d}"
        write_vxp(grid, root / f"{grid.item_id}.vxp")
        items.append((grid.item_id, "test" if test_every and i % test_every == test_every - 1 else "train"))
    n_parts = 4 if category == "chair" else 2
    man = DatasetManifest(category, n_parts, resolution, 0, items)
    man.save(root / "manifest.txt")
    return man


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("small_data")
    write_dataset(root)
    return root
