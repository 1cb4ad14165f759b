"""Command-line interface: ``voxattn <command> [options]``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .data import DatasetManifest, generate_synthetic, read_vxp, split_dataset, write_vxp
from .data.synth import CATEGORIES
from .pipeline import (
    FORMATS,
    PipelineError,
    TrainConfig,
    evaluate,
    export_attention_maps,
    export_shape,
    interpolate,
    labels_from_parts,
    load_checkpoint,
    load_samples,
    mix,
    part_names,
    random_donors,
    reconstruct,
    save_checkpoint,
    swap,
    train,
)
from .pipeline.plots import shape_projections

log = logging.getLogger("voxattn")


def _common(p: argparse.ArgumentParser, checkpoint: bool = False, config: bool = False) -> None:
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--seed", type=int, default=None)
    if checkpoint:
        p.add_argument("--checkpoint", required=True, help="VXCK checkpoint")
    if config:
        p.add_argument("--config", help="key = value config file")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="voxattn", description="Part-assembly voxel autoencoder with part attention.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="write synthetic labelled shapes and a manifest")
    _common(p)
    p.add_argument("--category", choices=sorted(CATEGORIES), default="chair")
    p.add_argument("--count", type=int, default=16)
    p.add_argument("--resolution", type=int, default=32)
    p.add_argument("--split", type=float, default=None, help="also split with this train ratio")

    p = sub.add_parser("split", help="seeded train/test split of a manifest")
    _common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--ratio", type=float, default=0.8)

    p = sub.add_parser("train", help="run or resume one training stage")
    _common(p, config=True)
    p.add_argument("--checkpoint", help="previous-stage (or same-stage, to resume) checkpoint")
    p.add_argument("--stage", type=int, choices=(1, 2, 3), required=True)
    p.add_argument("--epochs", type=int, default=None, help="stop after this many epochs of this call")

    p = sub.add_parser("eval", help="metrics on a split")
    _common(p, checkpoint=True, config=True)
    p.add_argument("--split", choices=("train", "test", "all"), default="test")
    p.add_argument("--set-metrics", action="store_true", help="also JSD, MMD and COV")

    p = sub.add_parser("recon", help="reconstruct items")
    _common(p, checkpoint=True, config=True)
    p.add_argument("--items", nargs="+", required=True)
    p.add_argument("--format", choices=FORMATS, default="obj-cubes")

    p = sub.add_parser("swap", help="swap one part latent between two items")
    _common(p, checkpoint=True, config=True)
    p.add_argument("--items", nargs=2, required=True)
    p.add_argument("--part", type=int, required=True, help="1-based part label")
    p.add_argument("--format", choices=FORMATS, default="obj-cubes")

    p = sub.add_parser("mix", help="assemble a shape from per-part donors")
    _common(p, checkpoint=True, config=True)
    p.add_argument("--donors", nargs="+", help="one item per part (default: random, seeded)")
    p.add_argument("--format", choices=FORMATS, default="obj-cubes")

    p = sub.add_parser("interp", help="latent interpolation between two items")
    _common(p, checkpoint=True, config=True)
    p.add_argument("--items", nargs=2, required=True)
    p.add_argument("--steps", type=int, default=8)
    p.add_argument("--format", choices=FORMATS, default="obj-cubes")

    p = sub.add_parser("attn-maps", help="export attention maps of one item")
    _common(p, checkpoint=True, config=True)
    p.add_argument("--item", required=True)

    p = sub.add_parser("export", help="convert a VXP file")
    _common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=FORMATS, default="obj-cubes")
    return ap


def _suffix(fmt: str) -> str:
    return {"vxp": ".vxp", "obj-cubes": ".obj", "ascii-slices": ".txt"}[fmt]


def _load_state(args):
    state = load_checkpoint(args.checkpoint)
    if getattr(args, "config", None):
        state.config = TrainConfig.load(args.config, base=state.config)
    return state


def _samples_by_id(state, ids):
    samples = {s.item_id: s for s in load_samples(state.config, None)}
    missing = [i for i in ids if i not in samples]
    if missing:
        raise PipelineError(f"unknown items {missing}")
    return [samples[i] for i in ids]


def _write_shapes(state, fwd, names, out: Path, fmt: str) -> None:
    cfg = state.config
    for k, name in enumerate(names):
        shape = fwd.shape.data[k]
        labels = labels_from_parts(fwd.placed.data[k])
        export_shape(shape, out / f"{name}{_suffix(fmt)}", fmt, labels=labels, category=cfg.category,
                     item_id=name, n_parts=cfg.n_parts)
        shape_projections(shape, out / f"{name}.png", title=name)
        print(f"wrote {out / name}{_suffix(fmt)}")


def run(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = 0 if args.seed is None else args.seed
    cmd = args.command

    if cmd == "gen-synth":
        items = []
        for i in range(args.count):
            grid = generate_synthetic(args.category, seed * 100003 + i, args.resolution)
            grid.item_id = f"{args.category}_{i:04d}"
            write_vxp(grid, out / f"{grid.item_id}.vxp")
            items.append((grid.item_id, "train"))
        man = DatasetManifest(args.category, len(CATEGORIES[args.category]), args.resolution, seed, items)
        if args.split is not None:
            man = split_dataset(man, args.split, seed)
        man.save(out / "manifest.txt")
        print(f"wrote {args.count} shapes and {out / 'manifest.txt'}")
        return 0

    if cmd == "split":
        man = split_dataset(DatasetManifest.load(args.manifest), args.ratio, args.seed)
        man.save(out / "manifest.txt")
        print(f"{len(man.ids('train'))} train / {len(man.ids('test'))} test -> {out / 'manifest.txt'}")
        return 0

    if cmd == "train":
        config = TrainConfig.load(args.config) if args.config else None
        if config is not None and args.seed is not None:
            config = config.override(seed=args.seed)
        init = load_checkpoint(args.checkpoint) if args.checkpoint else None
        if init is None and config is None:
            raise PipelineError("train needs --config for a fresh run")
        ck = out / f"stage{args.stage}.ckpt"
        state = train(args.stage, config, init, out / "train_log.csv", args.epochs, checkpoint_path=ck)
        save_checkpoint(state, ck)
        print(f"stage {args.stage} at epoch {state.epoch}; checkpoint {ck}")
        return 0

    if cmd == "export":
        grid = read_vxp(args.input)
        path = out / f"{grid.item_id}{_suffix(args.format)}"
        export_shape(grid.occupancy(), path, args.format, labels=grid.labels, category=grid.category,
                     item_id=grid.item_id, n_parts=grid.n_parts)
        print(f"wrote {path}")
        return 0

    state = _load_state(args)
    cfg = state.config

    if cmd == "eval":
        split = None if args.split == "all" else args.split
        samples = load_samples(cfg, split)
        rep = evaluate(state.model, samples, with_head=state.stage > 1, batch=cfg.batch_size,
                       set_metrics=args.set_metrics, seed=seed)
        print(rep.table(part_names(cfg.category, cfg.n_parts)))
        (out / "metrics.csv").write_text(rep.to_csv(), encoding="utf-8")
        return 0

    if cmd == "recon":
        samples = _samples_by_id(state, args.items)
        _write_shapes(state, reconstruct(state.model, samples), [f"recon_{i}" for i in args.items], out, args.format)
        return 0

    if cmd == "swap":
        a, b = _samples_by_id(state, args.items)
        fa, fb = swap(state.model, a, b, args.part - 1)
        for fwd, name in ((fa, args.items[0]), (fb, args.items[1])):
            _write_shapes(state, fwd, [f"swap{args.part}_{name}"], out, args.format)
        return 0

    if cmd == "mix":
        if args.donors:
            donors = _samples_by_id(state, args.donors)
        else:
            donors = random_donors(load_samples(cfg, None), cfg.n_parts, seed)
        print("donors: " + " ".join(d.item_id for d in donors))
        _write_shapes(state, mix(state.model, donors), [f"mix_seed{seed}"], out, args.format)
        return 0

    if cmd == "interp":
        a, b = _samples_by_id(state, args.items)
        alphas, fwd = interpolate(state.model, a, b, args.steps)
        _write_shapes(state, fwd, [f"interp_{k:02d}_a{al:.3f}" for k, al in enumerate(alphas)], out, args.format)
        return 0

    if cmd == "attn-maps":
        (item,) = _samples_by_id(state, [args.item])
        maps = export_attention_maps(state.model, item, out, part_names(cfg.category, cfg.n_parts))
        for layer, arr in maps.items():
            print(f"layer {layer}: {arr.shape[0]} blocks x {arr.shape[1]} heads x {arr.shape[2]}x{arr.shape[3]}")
        return 0

    raise AssertionError(cmd)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    np.seterr(all="ignore")
    try:
        return run(args)
    except (PipelineError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
