"""Three-stage training driver, evaluation and the CSV log.

Stage 1 trains encoder, projection bank and decoder on the PI and part
losses. Stage 2 freezes those (batch norm in eval mode) and trains only the
transformation head on the transform and attention-consistency losses; since
the frozen network is deterministic its feature taps are computed once per
item and reused. Stage 3 fine-tunes everything on all five terms.

Log rows hold one line per epoch: the epoch-mean of each loss term and the
total, then evaluation metrics on every ``eval_every``-th epoch (blank
otherwise).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..autodiff.optim import AdamState, adam_step
from ..autodiff.tensor import Tensor, no_grad
from ..data.canonical import ShapeSample, preprocess
from ..data.manifest import DatasetManifest
from ..data.synth import CATEGORIES
from ..data.vxp import read_vxp
from ..losses import TERMS, stage_loss
from ..metrics import (
    CD_POINTS,
    EMD_POINTS,
    MetricReport,
    jsd,
    mean_part_miou,
    miou,
    mmd_cov,
    sample_points,
    symmetry_score,
)
from ..model.assembly import apply_transform, compose_shape
from ..model.network import VoxAttention
from .checkpoint import CheckpointData, Entry, read_checkpoint, write_checkpoint
from .config import TrainConfig

log = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "stage", *TERMS, "total", "part_miou", "shape_miou", "transform_mse", "symmetry")


class PipelineError(RuntimeError):
    pass


@dataclass
class TrainState:
    config: TrainConfig
    model: VoxAttention
    stage: int
    epoch: int
    adam: AdamState
    rng: np.random.Generator


def new_state(config: TrainConfig) -> TrainState:
    config.validate()
    model = VoxAttention(config.model_config(), np.random.default_rng(config.seed))
    return TrainState(config, model, 0, 0, AdamState(), np.random.default_rng([config.seed, 0]))


# ---------------------------------------------------------------- checkpoints


def state_to_checkpoint(state: TrainState) -> CheckpointData:
    entries = []
    for name, p in state.model.named_parameters():
        moments = p.adam_m.any() or p.adam_v.any()
        entries.append(Entry(name, p.data, p.adam_m if moments else None, p.adam_v if moments else None))
    for name, buf in state.model.named_buffers():
        entries.append(Entry(name, buf))
    meta = {
        "stage": str(state.stage),
        "epoch": str(state.epoch),
        "adam_step": str(state.adam.step_count),
    }
    for line in state.config.to_text().splitlines():
        key, val = line.split(" = ", 1)
        meta[f"config.{key}"] = val
    return CheckpointData(entries, meta, state.rng.bit_generator.state)


def state_from_checkpoint(ck: CheckpointData) -> TrainState:
    text = "".join(f"{k[len('config.'):]} = {v}\n" for k, v in ck.meta.items() if k.startswith("config."))
    config = TrainConfig.from_text(text)
    state = new_state(config)
    params = dict(state.model.named_parameters())
    buffers = dict(state.model.named_buffers())
    seen = set()
    for e in ck.entries:
        if e.name in params:
            p = params[e.name]
            _assign(p.data, e.data, e.name)
            if e.adam_m is not None:
                _assign(p.adam_m, e.adam_m, e.name)
                _assign(p.adam_v, e.adam_v, e.name)
            else:
                p.adam_m[...] = 0
                p.adam_v[...] = 0
        elif e.name in buffers:
            _assign(buffers[e.name], e.data, e.name)
        else:
            raise PipelineError(f"checkpoint entry {e.name!r} does not match the model")
        seen.add(e.name)
    missing = (set(params) | set(buffers)) - seen
    if missing:
        raise PipelineError(f"checkpoint lacks entries {sorted(missing)[:5]}")
    state.stage = int(ck.meta["stage"])
    state.epoch = int(ck.meta["epoch"])
    sched = config.schedule(state.stage) if state.stage else None
    state.adam = _adam_for(sched) if sched else AdamState()
    state.adam.step_count = int(ck.meta["adam_step"])
    state.rng.bit_generator.state = ck.rng_state
    return state


def _assign(dst: np.ndarray, src: np.ndarray, name: str) -> None:
    if dst.shape != src.shape or dst.dtype != src.dtype:
        raise PipelineError(f"{name}: checkpoint has {src.dtype}{src.shape}, model expects {dst.dtype}{dst.shape}")
    dst[...] = src


def save_checkpoint(state: TrainState, path) -> None:
    write_checkpoint(state_to_checkpoint(state), path)


def load_checkpoint(path) -> TrainState:
    return state_from_checkpoint(read_checkpoint(path))


def _adam_for(sched) -> AdamState:
    return AdamState(lr=sched.lr, decay_ratio=sched.decay_ratio, decay_every=sched.decay_every)


# ---------------------------------------------------------------- data


def load_samples(config: TrainConfig, split: str | None) -> list[ShapeSample]:
    """Preprocessed items of a split, in manifest order."""
    if not config.manifest:
        raise PipelineError("config has no manifest path")
    manifest = DatasetManifest.load(config.manifest)
    check_dataset(config, manifest)
    root = Path(config.data_dir) if config.data_dir else Path(config.manifest).parent
    samples = []
    for item in manifest.ids(split):
        grid = read_vxp(root / f"{item}.vxp")
        if grid.resolution != config.resolution or grid.n_parts != config.n_parts:
            raise PipelineError(
                f"item {item}: R={grid.resolution}, N_p={grid.n_parts} does not match the config "
                f"(R={config.resolution}, N_p={config.n_parts})"
            )
        samples.append(preprocess(grid))
    return samples


def check_dataset(config: TrainConfig, manifest: DatasetManifest) -> None:
    if (manifest.n_parts, manifest.resolution) != (config.n_parts, config.resolution):
        raise PipelineError(
            f"dataset has N_p={manifest.n_parts}, R={manifest.resolution}; config expects "
            f"N_p={config.n_parts}, R={config.resolution}"
        )
    if manifest.category != config.category:
        raise PipelineError(f"dataset category {manifest.category!r} != config category {config.category!r}")


def _stack(samples: list[ShapeSample], dtype):
    return (
        np.stack([s.occupancy for s in samples])[:, None].astype(dtype),
        np.stack([s.canonical for s in samples]).astype(dtype),
        np.stack([s.transforms for s in samples]).astype(dtype),
        np.stack([s.present for s in samples]),
    )


# ---------------------------------------------------------------- training


def _configure_stage(model: VoxAttention, stage: int) -> None:
    model.train()
    model.head.set_frozen(stage == 1)
    for m in model.autoencoder_modules:
        m.set_frozen(stage == 2)
        if stage == 2:
            m.eval()


def _cached_taps(model: VoxAttention, samples, batch: int, dtype) -> dict[int, np.ndarray]:
    layers = model.cfg.layer_indices
    chunks = {i: [] for i in layers}
    with no_grad():
        for lo in range(0, len(samples), batch):
            x = _stack(samples[lo : lo + batch], dtype)[0]
            z = model.encode(x)
            _, taps = model.decode(model.project(z))
            for i in layers:
                chunks[i].append(taps[i].data)
    return {i: np.concatenate(c) for i, c in chunks.items()}


def _batch_loss(state: TrainState, stage: int, batch, taps, weights):
    model = state.model
    cfg = state.config
    x, canon, tf, present = batch
    inputs = {"present": present, "gt": tf}
    if stage == 2:
        head = model.regress({i: Tensor(t) for i, t in taps.items()})
        inputs.update(pred=head.transforms, ac_vectors=head.ac_vectors)
    else:
        fwd = model(x, with_head=stage == 3)
        inputs.update(bank=model.bank.matrices, output=fwd.canonical, target=canon)
        if cfg.absent_parts_empty:
            inputs["part_mask"] = np.ones_like(present)
        if stage == 3:
            inputs.update(
                pred=fwd.head.transforms, ac_vectors=fwd.head.ac_vectors, assembled=fwd.shape, shape_target=x[:, 0]
            )
    return stage_loss(stage, inputs, weights, state.epoch, apply_ac=cfg.apply_ac)


def train(
    stage: int,
    config: TrainConfig | None = None,
    init: TrainState | None = None,
    log_path=None,
    max_epochs: int | None = None,
    checkpoint_path=None,
) -> TrainState:
    """Run (or resume) one stage and return the final state.

    Stage 1 starts from ``config`` or resumes a stage-1 state. Stages 2 and 3
    need the state left by the previous stage, or a state of the same stage
    to resume. ``max_epochs`` stops early after that many epochs of this call
    (used to split a run); the stage schedule still decides the total.
    """
    if stage not in (1, 2, 3):
        raise PipelineError(f"stage must be 1, 2 or 3, got {stage}")
    if init is None:
        if stage != 1:
            raise PipelineError(f"stage {stage} needs a stage-{stage - 1} checkpoint")
        if config is None:
            raise PipelineError("a fresh stage-1 run needs a config")
        state = new_state(config)
    elif init.stage not in (stage - 1, stage):
        raise PipelineError(f"stage {stage} needs a stage-{stage - 1} checkpoint, got stage {init.stage}")
    else:
        state = init
        if config is not None:
            state.config = _merge_schedule(state.config, config)
    cfg = state.config
    sched = cfg.schedule(stage)
    if state.stage != stage:
        state.stage, state.epoch = stage, 0
        state.adam = _adam_for(sched)
        state.rng = np.random.default_rng([cfg.seed, stage])
        for p in state.model.parameters():
            p.adam_m[...] = 0
            p.adam_v[...] = 0
    else:
        step = state.adam.step_count
        state.adam = _adam_for(sched)
        state.adam.step_count = step

    dtype = cfg.model_config().np_dtype
    train_set = load_samples(cfg, "train")
    if not train_set:
        raise PipelineError("training split is empty")
    eval_set = train_set if cfg.eval_split == "train" else load_samples(cfg, cfg.eval_split)
    weights = cfg.loss_weights()
    model = state.model
    _configure_stage(model, stage)
    taps_all = _cached_taps(model, train_set, cfg.batch_size, dtype) if stage == 2 else None
    writer = _LogWriter(log_path)

    end = sched.epochs if max_epochs is None else min(sched.epochs, state.epoch + max_epochs)
    while state.epoch < end:
        order = state.rng.permutation(len(train_set))
        sums = {t: 0.0 for t in TERMS}
        total = 0.0
        n_batches = 0
        for lo in range(0, len(order), cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            batch = _stack([train_set[i] for i in idx], dtype)
            taps = {i: t[idx] for i, t in taps_all.items()} if taps_all is not None else None
            report = _batch_loss(state, stage, batch, taps, weights)
            report.total_tensor.backward()
            adam_step(model.parameters(), state.adam, state.epoch)
            for t, v in report.terms.items():
                sums[t] += v
            total += report.total
            n_batches += 1
        state.epoch += 1
        row = {"epoch": state.epoch, "stage": stage, "total": total / n_batches}
        for t in TERMS:
            row[t] = sums[t] / n_batches if t in report.terms else None
        if state.epoch % cfg.eval_every == 0:
            if not eval_set:
                raise PipelineError(f"evaluation split {cfg.eval_split!r} is empty")
            rep = evaluate(model, eval_set, with_head=stage > 1, batch=cfg.batch_size)
            _configure_stage(model, stage)
            row.update(
                part_miou=rep.part_miou,
                shape_miou=rep.shape_miou if stage > 1 else None,
                transform_mse=rep.transform_mse if stage > 1 else None,
                symmetry=rep.symmetry if stage > 1 else None,
            )
            log.info("stage %d epoch %d: %s", stage, state.epoch, rep.csv_row())
        writer.write(row)
        if checkpoint_path is not None:
            save_checkpoint(state, checkpoint_path)
    return state


def _merge_schedule(current: TrainConfig, given: TrainConfig) -> TrainConfig:
    """Take schedule and evaluation settings from ``given``; model and data keys must agree."""
    locked = ("n_parts", "resolution", "head_mode", "layer_indices", "d_a", "heads", "blocks", "ff_mult",
              "head_hidden", "mlp_hidden", "enc_channels", "latent_dim", "dtype", "category")
    for key in locked:
        if getattr(current, key) != getattr(given, key):
            raise PipelineError(
                f"config {key}={getattr(given, key)!r} conflicts with the checkpoint ({getattr(current, key)!r})"
            )
    return given


class _LogWriter:
    def __init__(self, path):
        self.path = Path(path) if path is not None else None
        if self.path is not None and (not self.path.exists() or self.path.stat().st_size == 0):
            self.path.write_text(",".join(LOG_COLUMNS) + "\n", encoding="utf-8")

    def write(self, row: dict) -> None:
        if self.path is None:
            return
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(",".join(_cell(row.get(c)) for c in LOG_COLUMNS) + "\n")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def read_log(path) -> list[dict[str, str]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = lines[0].split(",")
    return [dict(zip(header, ln.split(","))) for ln in lines[1:]]


def fluctuation(rows: list[dict[str, str]], stage: int = 2, column: str = "shape_miou", window: int = 10):
    """Mean and standard deviation of a metric over the last ``window`` evaluation rows of a stage."""
    vals = [float(r[column]) for r in rows if r["stage"] == str(stage) and r[column]]
    if not vals:
        raise PipelineError(f"no {column} evaluations for stage {stage}")
    vals = vals[-window:]
    return float(np.mean(vals)), float(np.std(vals))


# ---------------------------------------------------------------- evaluation


def predict(model: VoxAttention, samples, batch: int = 8, with_head: bool = True):
    """Eval-mode forward of every sample; returns canonical parts, transforms, placed parts, shapes."""
    model.eval()
    dtype = model.cfg.np_dtype
    out = {"canonical": [], "transforms": [], "placed": [], "shape": []}
    with no_grad():
        for lo in range(0, len(samples), batch):
            x = _stack(samples[lo : lo + batch], dtype)[0]
            fwd = model(x, with_head=with_head)
            out["canonical"].append(fwd.canonical.data)
            if with_head:
                out["transforms"].append(fwd.head.transforms.data)
                out["placed"].append(fwd.placed.data)
                out["shape"].append(fwd.shape.data)
    return {k: np.concatenate(v) if v else None for k, v in out.items()}


def evaluate(
    model: VoxAttention,
    samples,
    with_head: bool = True,
    batch: int = 8,
    set_metrics: bool = False,
    seed: int = 0,
    transforms_override=None,
) -> MetricReport:
    """Metrics of the full pipeline on ``samples``.

    ``transforms_override`` (items, N_p, 6) replaces the head's transforms,
    e.g. with the ground truth to isolate the assembly from the regression.
    """
    if not samples:
        raise PipelineError("cannot evaluate an empty split")
    pred = predict(model, samples, batch, with_head and transforms_override is None)
    present = np.stack([s.present for s in samples])
    ious = np.array(
        [[miou(pred["canonical"][i, j], s.canonical[j]) for j in range(len(s.present))] for i, s in enumerate(samples)]
    )
    per_part, part_mean = mean_part_miou(ious, present)
    report = MetricReport(part_iou=per_part, part_miou=part_mean, n_items=len(samples))
    if not with_head:
        return report
    if transforms_override is not None:
        tf = np.asarray(transforms_override, dtype=pred["canonical"].dtype)
        with no_grad():
            placed = apply_transform(pred["canonical"], tf)
            pred["placed"] = placed.data
            pred["shape"] = compose_shape(placed).data
        pred["transforms"] = tf
    gt_tf = np.stack([s.transforms for s in samples])
    err = (pred["transforms"] - gt_tf) ** 2
    report.transform_mse = float(err[present].mean())
    report.shape_miou = float(np.mean([miou(pred["shape"][i], s.occupancy) for i, s in enumerate(samples)]))
    report.symmetry = float(np.mean([symmetry_score(sh) for sh in pred["shape"]]))
    sym_parts = []
    for j in range(present.shape[1]):
        vals = [symmetry_score(pred["placed"][i, j]) for i in range(len(samples)) if present[i, j]]
        sym_parts.append(float(np.mean(vals)) if vals else None)
    report.symmetry_parts = sym_parts
    if set_metrics:
        _set_metrics(report, pred["shape"], [s.occupancy for s in samples], seed)
    return report


def _set_metrics(report: MetricReport, shapes, references, seed: int) -> None:
    gen_cd, ref_cd, gen_emd, ref_emd = [], [], [], []
    for i, (g, r) in enumerate(zip(shapes, references)):
        if not (g >= 0.5).any():
            log.warning("item %d reconstructs to an empty grid; skipped in set metrics", i)
            continue
        gen_cd.append(sample_points(g, CD_POINTS, seed + 2 * i))
        ref_cd.append(sample_points(r, CD_POINTS, seed + 2 * i + 1))
        gen_emd.append(sample_points(g, EMD_POINTS, seed + 2 * i))
        ref_emd.append(sample_points(r, EMD_POINTS, seed + 2 * i + 1))
    if not gen_cd:
        return
    report.jsd = jsd(gen_cd, ref_cd)
    report.mmd_cd, report.cov_cd = mmd_cov(gen_cd, ref_cd, "cd", paired=True)
    report.mmd_emd, report.cov_emd = mmd_cov(gen_emd, ref_emd, "emd", paired=True)


def part_names(category: str, n_parts: int) -> list[str]:
    names = list(CATEGORIES.get(category, ()))
    return names if len(names) == n_parts else [f"part{i}" for i in range(1, n_parts + 1)]
