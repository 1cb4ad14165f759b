"""Loss terms for the three training stages.

BCE-style terms use a mean over voxels so that their scale and the useful
learning rates do not depend on the grid resolution.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np

from .autodiff import functional as F
from .autodiff.tensor import Tensor, as_tensor

CLAMP = 1e-7
TERMS = ("pi", "part", "trans", "ac", "shape")
STAGE_TERMS = {1: ("pi", "part"), 2: ("trans", "ac"), 3: TERMS}


@dataclass
class LossWeights:
    pi: float = 1.0
    part: float = 1.0
    trans: float = 10.0
    ac: float = 1.0
    shape: float = 10.0
    trans_s2: float = 1.0
    ac_s2: float = 1.0
    gamma: float = 0.6

    def for_stage(self, stage: int) -> dict[str, float]:
        if stage not in STAGE_TERMS:
            raise ValueError(f"stage must be 1, 2 or 3, got {stage}")
        if stage == 2:
            return {"trans": self.trans_s2, "ac": self.ac_s2}
        return {t: getattr(self, t) for t in STAGE_TERMS[stage]}


@dataclass
class StageLossReport:
    stage: int
    epoch: int
    terms: dict[str, float]
    weights: dict[str, float]
    total: float
    total_tensor: Tensor | None = field(default=None, repr=False, compare=False)


def loss_pi(bank) -> Tensor:
    """Partition-of-identity penalty on a (N_p, d, d) stack of projection matrices.

    sum_i ||P_i P_i - P_i||^2 + sum_{i != j} ||P_i P_j||^2 + ||sum_i P_i - I||^2,
    the cross term running over ordered pairs.
    """
    bank = as_tensor(bank)
    n, d, _ = bank.shape
    prods = F.matmul(F.reshape(bank, (n, 1, d, d)), F.reshape(bank, (1, n, d, d)))  # (n, n, d, d)
    eye_n = np.eye(n, dtype=bank.dtype).reshape(n, n, 1, 1)
    diag = F.sum(F.mul(prods, eye_n), axis=1)  # P_i P_i
    idem = F.sum(F.square(F.sub(diag, bank)))
    cross = F.sum(F.square(F.mul(prods, 1.0 - eye_n)))
    total = F.sub(F.sum(bank, axis=0), np.eye(d, dtype=bank.dtype))
    return F.add(F.add(idem, cross), F.sum(F.square(total)))


def _weighted_bce(o: Tensor, t: np.ndarray, gamma: float) -> Tensor:
    o = F.clip(o, CLAMP, 1.0 - CLAMP)
    pos = F.mul(F.log(o), gamma * t)
    neg = F.mul(F.log(F.sub(1.0, o)), (1.0 - gamma) * (1.0 - t))
    return F.mul(F.add(pos, neg), -2.0)


def loss_part(output, target, present, gamma: float = 0.6) -> Tensor:
    """Weighted BCE averaged over the voxels of the parts selected by ``present``.

    output, target: (B, N_p, ...) ; present: (B, N_p) bool. Passing an
    all-true mask also trains absent parts toward their empty target.
    """
    output = as_tensor(output)
    target = np.asarray(target, dtype=output.dtype)
    present = np.asarray(present, dtype=bool)
    b, n = output.shape[:2]
    per_voxel = _weighted_bce(output, target, gamma)
    per_part = F.sum(F.reshape(per_voxel, (b, n, -1)), axis=2)
    n_vox = int(np.prod(output.shape[2:]))
    count = max(int(present.sum()), 1) * n_vox
    return F.mul(F.sum(F.mul(per_part, present.astype(output.dtype))), 1.0 / count)


def loss_shape(assembled, target, gamma: float = 0.6) -> Tensor:
    assembled = as_tensor(assembled)
    target = np.asarray(target, dtype=assembled.dtype).reshape(assembled.shape)
    return F.mean(_weighted_bce(assembled, target, gamma))


def loss_trans(pred, gt, present) -> Tensor:
    """Squared error summed over the 6 parameters and present parts, averaged over the batch."""
    pred = as_tensor(pred)
    gt = np.asarray(gt, dtype=pred.dtype)
    mask = np.asarray(present, dtype=pred.dtype)[..., None]
    sq = F.mul(F.square(F.sub(pred, gt)), mask)
    return F.mul(F.sum(sq), 1.0 / pred.shape[0])


def loss_ac(ac_vectors) -> Tensor:
    """Mean squared difference between per-layer attention outputs, summed over unordered pairs."""
    ac_vectors = list(ac_vectors)
    if len(ac_vectors) < 2:
        warnings.warn("attention consistency loss needs at least two feature layers; returning 0", stacklevel=2)
        dtype = ac_vectors[0].dtype if ac_vectors else np.float64
        return Tensor(np.zeros((), dtype=dtype))
    terms = [F.mean(F.square(F.sub(a, b))) for a, b in itertools.combinations(ac_vectors, 2)]
    out = terms[0]
    for t in terms[1:]:
        out = F.add(out, t)
    return out


class MissingLossInput(ValueError):
    pass


def stage_loss(stage: int, inputs: dict, weights: LossWeights, epoch: int = 0, apply_ac: bool = True) -> StageLossReport:
    """Weighted stage total plus the individual terms.

    ``inputs`` keys: bank, output, target, present, pred, gt, ac_vectors,
    assembled, shape_target, and optionally part_mask (defaults to present)
    selecting the parts the part loss covers. Only those needed by the active
    terms are read.
    """
    w = weights.for_stage(stage)
    if not apply_ac:
        w["ac"] = 0.0
    needs = {
        "pi": ("bank",),
        "part": ("output", "target", "present"),
        "trans": ("pred", "gt", "present"),
        "ac": ("ac_vectors",),
        "shape": ("assembled", "shape_target"),
    }
    values: dict[str, Tensor] = {}
    for term, weight in w.items():
        if term == "ac" and weight == 0.0:
            continue
        missing = [k for k in needs[term] if inputs.get(k) is None]
        if missing:
            raise MissingLossInput(f"stage {stage} term {term!r} needs inputs {missing}")
        if term == "pi":
            values[term] = loss_pi(inputs["bank"])
        elif term == "part":
            mask = inputs.get("part_mask")
            mask = inputs["present"] if mask is None else mask
            values[term] = loss_part(inputs["output"], inputs["target"], mask, weights.gamma)
        elif term == "trans":
            values[term] = loss_trans(inputs["pred"], inputs["gt"], inputs["present"])
        elif term == "ac":
            values[term] = loss_ac(inputs["ac_vectors"])
        else:
            values[term] = loss_shape(inputs["assembled"], inputs["shape_target"], weights.gamma)
    total = None
    for term, val in values.items():
        part = F.mul(val, w[term])
        total = part if total is None else F.add(total, part)
    terms = {t: float(v.data) for t, v in values.items()}
    return StageLossReport(stage, epoch, terms, w, float(total.data), total)
