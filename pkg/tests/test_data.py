import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voxattn.data import (
    DatasetManifest,
    LabeledVoxelGrid,
    ManifestError,
    PartTransform,
    VxpFormatError,
    canonicalize_part,
    decode_vxp,
    encode_vxp,
    generate_synthetic,
    preprocess,
    read_vxp,
    reassemble_gt,
    split_dataset,
    write_vxp,
)
from voxattn.metrics import miou, symmetry_score


def grid_with_box(lo, hi, r=32, label=1, n_parts=1):
    labels = np.zeros((r, r, r), np.uint8)
    labels[lo[0] : hi[0], lo[1] : hi[1], lo[2] : hi[2]] = label
    return LabeledVoxelGrid(labels, n_parts, "test", "box")


# ---------------------------------------------------------------- VXP


def test_vxp_round_trip_bitwise(tmp_path):
    grid = generate_synthetic("chair", 3)
    grid.item_id = "chair_3"
    write_vxp(grid, tmp_path / "chair_3.vxp")
    back = read_vxp(tmp_path / "chair_3.vxp")
    assert back.labels.dtype == np.uint8
    np.testing.assert_array_equal(back.labels, grid.labels)
    assert (back.n_parts, back.category, back.item_id) == (4, "chair", "chair_3")
    assert encode_vxp(back) == (tmp_path / "chair_3.vxp").read_bytes()


def test_vxp_layout_is_x_slowest():
    labels = np.zeros((2, 2, 2), np.uint8)
    labels[1, 0, 1] = 1
    buf = encode_vxp(LabeledVoxelGrid(labels, 1, "c"))
    header = 4 + 1 + 4 + 1 + 1 + 1
    assert buf[:4] == b"VXP1"
    assert buf[header + 1 * 4 + 0 * 2 + 1] == 1
    assert int.from_bytes(buf[5:9], "little") == 2


def test_vxp_bad_magic_offset_zero():
    buf = b"XXXX" + encode_vxp(generate_synthetic("chair", 0, 16))[4:]
    with pytest.raises(VxpFormatError) as err:
        decode_vxp(buf)
    assert err.value.offset == 0


def test_vxp_truncated_and_bad_label():
    buf = encode_vxp(generate_synthetic("table", 0, 16))
    with pytest.raises(VxpFormatError):
        decode_vxp(buf[:-5])
    bad = bytearray(buf)
    bad[-1] = 9
    with pytest.raises(VxpFormatError) as err:
        decode_vxp(bytes(bad))
    assert err.value.offset == len(buf) - 1


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(0, 3), st.binary(min_size=0, max_size=8))
def test_vxp_round_trip_property(r, n_parts, cat):
    rng = np.random.default_rng(r * 10 + n_parts)
    labels = rng.integers(0, n_parts + 1, size=(r, r, r)).astype(np.uint8)
    grid = LabeledVoxelGrid(labels, n_parts, cat.decode("latin-1"))
    back = decode_vxp(encode_vxp(grid))
    np.testing.assert_array_equal(back.labels, labels)
    assert back.category == grid.category


# ---------------------------------------------------------------- canonicalization


def test_canonical_centre_box():
    canon, tf = canonicalize_part(grid_with_box((8, 8, 8), (24, 24, 24)), 1)
    assert canon.present
    assert tf.scale == (0.5, 0.5, 0.5)
    assert tf.translation == (0.0, 0.0, 0.0)
    assert canon.occupancy.all()


def test_canonical_full_grid_identity():
    grid = grid_with_box((0, 0, 0), (32, 32, 32))
    canon, tf = canonicalize_part(grid, 1)
    np.testing.assert_array_equal(tf.as_vector(), [1, 1, 1, 0, 0, 0])
    np.testing.assert_array_equal(canon.occupancy, grid.occupancy())


def test_canonical_single_voxel():
    _, tf = canonicalize_part(grid_with_box((0, 0, 0), (1, 1, 1)), 1)
    np.testing.assert_allclose(tf.scale, [1 / 32] * 3)
    np.testing.assert_allclose(tf.translation, [-0.484375] * 3)


def test_absent_part_placeholder():
    canon, tf = canonicalize_part(grid_with_box((0, 0, 0), (4, 4, 4), n_parts=2), 2)
    assert not canon.present
    assert not canon.occupancy.any()
    assert tf == PartTransform.placeholder()


def test_canonical_bbox_fills_grid():
    grid = generate_synthetic("chair", 11)
    for p in range(1, 5):
        canon, tf = canonicalize_part(grid, p)
        if canon.present:
            occ = canon.occupancy > 0
            for axis in range(3):
                other = tuple(a for a in range(3) if a != axis)
                filled = occ.any(axis=other)
                assert filled[0] and filled[-1]
            assert all(0 < s <= 1 for s in tf.scale)
            assert all(-0.5 < t < 0.5 for t in tf.translation)


def round_trip_part_ious(grid):
    sample = preprocess(grid)
    placed, union = reassemble_gt(sample.canonical, sample.transforms)
    ious = [miou(placed[p - 1], grid.part_mask(p)) for p in range(1, grid.n_parts + 1) if sample.present[p - 1]]
    return ious, miou(union, grid.occupancy())


@pytest.mark.parametrize("category", ["chair", "table"])
def test_round_trip_exact(category):
    for seed in range(25):
        part_ious, shape_iou = round_trip_part_ious(generate_synthetic(category, seed))
        assert min(part_ious) == 1.0
        assert shape_iou == 1.0


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 31), st.integers(1, 32)), min_size=3, max_size=3))
def test_round_trip_arbitrary_boxes(extents):
    lo = [min(a, 31) for a, _ in extents]
    hi = [min(a + n, 32) for a, n in extents]
    hi = [max(h, l + 1) for l, h in zip(lo, hi)]
    grid = grid_with_box(lo, hi)
    rng = np.random.default_rng(sum(lo) * 97 + sum(hi))
    # carve holes so the content is not a solid box
    holes = rng.random(grid.labels.shape) < 0.3
    grid.labels[holes] = 0
    if not grid.labels.any():
        return
    part_ious, _ = round_trip_part_ious(grid)
    assert part_ious[0] == 1.0


def test_absent_armrest_contributes_nothing():
    seed = next(s for s in range(100) if not (generate_synthetic("chair", s).labels == 4).any())
    sample = preprocess(generate_synthetic("chair", seed))
    assert not sample.present[3]
    placed, _ = reassemble_gt(sample.canonical, sample.transforms)
    assert not placed[3].any()


# ---------------------------------------------------------------- synthetic generator


def test_synthetic_deterministic():
    a = generate_synthetic("chair", 7)
    b = generate_synthetic("chair", 7)
    np.testing.assert_array_equal(a.labels, b.labels)
    assert not np.array_equal(a.labels, generate_synthetic("chair", 8).labels)


def test_synthetic_chairs_symmetric_and_labelled():
    for seed in range(40):
        g = generate_synthetic("chair", seed)
        assert symmetry_score(g.occupancy()) == 1.0
        assert set(np.unique(g.labels)) <= {0, 1, 2, 3, 4}
        assert all((g.labels == p).any() for p in (1, 2, 3))


def test_synthetic_armrest_frequency():
    absent = np.mean([not (generate_synthetic("chair", s, 16).labels == 4).any() for s in range(1000)])
    assert 0.25 < absent < 0.35


def test_synthetic_resolution_guard():
    with pytest.raises(ValueError):
        generate_synthetic("chair", 0, 8)
    with pytest.raises(ValueError):
        generate_synthetic("sofa", 0)


# ---------------------------------------------------------------- manifest


def test_split_counts_and_determinism():
    man = DatasetManifest("chair", 4, 32, 5, [(f"i{k}", "train") for k in range(10)])
    a = split_dataset(man, 0.8, 5)
    assert len(a.ids("train")) == 8 and len(a.ids("test")) == 2
    assert split_dataset(man, 0.8, 5).items == a.items
    shuffled = DatasetManifest("chair", 4, 32, 5, list(reversed(man.items)))
    assert sorted(split_dataset(shuffled, 0.8, 5).items) == sorted(a.items)
    assert split_dataset(man, 1.0, 5).ids("test") == []


def test_split_errors():
    with pytest.raises(ManifestError):
        split_dataset(DatasetManifest("chair", 4, 32, 0, []))
    with pytest.raises(ManifestError):
        split_dataset(DatasetManifest("chair", 4, 32, 0, [("a", "train")]))


def test_manifest_text_round_trip(tmp_path):
    man = split_dataset(DatasetManifest("table", 2, 16, 3, [(f"t{k}", "train") for k in range(5)]))
    man.save(tmp_path / "m.txt")
    assert DatasetManifest.load(tmp_path / "m.txt") == man
    with pytest.raises(ManifestError):
        DatasetManifest.loads("chair\t4\t32\t0\nitem\tvalidation\n")
