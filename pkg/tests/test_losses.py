import math
import warnings

import numpy as np
import pytest
from scipy.stats import ortho_group

from voxattn.autodiff import AdamState, Parameter, Tensor, adam_step, grad_check
from voxattn.losses import (
    LossWeights,
    MissingLossInput,
    loss_ac,
    loss_part,
    loss_pi,
    loss_shape,
    loss_trans,
    stage_loss,
)
from voxattn.model import block_partition


def pi_reference(bank):
    """Direct double-loop evaluation of the partition-of-identity penalty."""
    n, d, _ = bank.shape
    total = 0.0
    for i in range(n):
        total += np.sum((bank[i] @ bank[i] - bank[i]) ** 2)
        for j in range(n):
            if i != j:
                total += np.sum((bank[i] @ bank[j]) ** 2)
    return total + np.sum((bank.sum(0) - np.eye(d)) ** 2)


def test_pi_block_partition_is_zero():
    for n, d in [(4, 256), (3, 10), (2, 7)]:
        assert float(loss_pi(block_partition(n, d)).data) < 1e-12


def test_pi_hand_cases():
    eye = np.eye(2)
    assert abs(float(loss_pi(np.stack([eye, eye])).data) - 6.0) < 1e-10
    assert abs(float(loss_pi(np.stack([eye, 0 * eye])).data)) < 1e-10


def test_pi_matches_reference(rng):
    bank = rng.normal(size=(3, 5, 5))
    assert math.isclose(float(loss_pi(bank).data), pi_reference(bank), rel_tol=1e-12)


def test_pi_orthogonal_conjugation_invariance():
    rng = np.random.default_rng(0)
    worst = 0.0
    for trial in range(100):
        bank = rng.normal(size=(4, 6, 6))
        q = ortho_group.rvs(6, random_state=trial)
        rotated = np.einsum("ab,nbc,dc->nad", q, bank, q)
        a, b = float(loss_pi(bank).data), float(loss_pi(rotated).data)
        worst = max(worst, abs(a - b) / a)
    assert worst < 1e-8


def test_bce_hand_values():
    half = np.full((1, 1, 1), 0.5)
    ones, zeros = np.ones((1, 1, 1)), np.zeros((1, 1, 1))
    present = np.ones((1, 1), bool)
    assert abs(float(loss_part(half, ones, present).data) - (-1.2 * math.log(0.5))) < 1e-12
    assert abs(float(loss_part(half, zeros, present).data) - (-0.8 * math.log(0.5))) < 1e-12
    assert abs(-1.2 * math.log(0.5) - 0.8318) < 1e-4
    assert float(loss_part(np.ones((1, 1, 1)) - 1e-12, ones, present).data) < 1e-6


def test_part_loss_masks_absent_parts(rng):
    out = rng.uniform(0.1, 0.9, size=(2, 3, 4))
    tgt = (rng.random((2, 3, 4)) > 0.5).astype(float)
    present = np.array([[True, False, True], [False, False, True]])
    full = loss_part(out, tgt, present).data
    changed = out.copy()
    changed[~present] = 0.999
    assert float(loss_part(changed, tgt, present).data) == pytest.approx(float(full), rel=1e-12)
    manual = -2 * (0.6 * tgt * np.log(out) + 0.4 * (1 - tgt) * np.log(1 - out))
    assert float(full) == pytest.approx(manual[present].mean(), rel=1e-12)


def test_shape_loss_mixture():
    out = np.full((1, 1, 2, 2, 2), 0.5)
    tgt = np.zeros((1, 2, 2, 2))
    tgt[0, 0] = 1.0  # half ones, half zeros
    expected = 0.5 * (-1.2 * math.log(0.5)) + 0.5 * (-0.8 * math.log(0.5))
    assert float(loss_shape(out, tgt).data) == pytest.approx(expected, rel=1e-12)


def test_trans_loss_cases():
    gt = np.zeros((1, 2, 6))
    pred = gt.copy()
    pred[0, 0, 0] = 0.1
    pred[0, 1] = 5.0
    present = np.array([[True, False]])
    assert float(loss_trans(pred, gt, present).data) == pytest.approx(0.01, rel=1e-12)
    assert float(loss_trans(gt, gt, present).data) == 0.0


def test_ac_loss_cases():
    a = np.zeros((2, 3, 4))
    assert float(loss_ac([a, a]).data) == 0.0
    assert float(loss_ac([a, a + 1.0]).data) == pytest.approx(1.0)
    assert float(loss_ac([a, a + 1.0, a + 2.0]).data) == pytest.approx(1.0 + 4.0 + 1.0)
    with pytest.warns(UserWarning):
        assert float(loss_ac([a]).data) == 0.0


def test_losses_non_negative(rng):
    for _ in range(20):
        out = rng.uniform(0, 1, size=(2, 2, 3))
        tgt = (rng.random((2, 2, 3)) > 0.5).astype(float)
        assert float(loss_part(out, tgt, np.ones((2, 2), bool)).data) >= 0
        assert float(loss_pi(rng.normal(size=(2, 3, 3))).data) >= 0


def test_grad_part_and_shape_losses(rng):
    out = Tensor(rng.uniform(0.05, 0.95, size=(2, 3, 2, 2, 2)), requires_grad=True)
    tgt = (rng.random((2, 3, 2, 2, 2)) > 0.5).astype(float)
    present = np.array([[True, True, False], [True, False, True]])
    assert grad_check(lambda: loss_part(out, tgt, present), [out]) < 1e-6
    shape = Tensor(rng.uniform(0.05, 0.95, size=(2, 1, 3, 3, 3)), requires_grad=True)
    shape_tgt = (rng.random((2, 3, 3, 3)) > 0.5).astype(float)
    assert grad_check(lambda: loss_shape(shape, shape_tgt), [shape]) < 1e-6


def test_grad_pi_trans_ac(rng):
    bank = Tensor(rng.normal(size=(3, 4, 4)), requires_grad=True)
    assert grad_check(lambda: loss_pi(bank), [bank]) < 1e-6
    pred = Tensor(rng.normal(size=(2, 3, 6)), requires_grad=True)
    gt = rng.normal(size=(2, 3, 6))
    assert grad_check(lambda: loss_trans(pred, gt, np.array([[1, 0, 1], [1, 1, 0]], bool)), [pred]) < 1e-6
    vs = [Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True) for _ in range(3)]
    assert grad_check(lambda: loss_ac(vs), vs) < 1e-6


def stage_inputs(rng):
    b, n, r = 2, 3, 2
    return {
        "bank": rng.normal(size=(n, 4, 4)),
        "output": rng.uniform(0.1, 0.9, size=(b, n, r, r, r)),
        "target": (rng.random((b, n, r, r, r)) > 0.5).astype(float),
        "present": np.array([[True, True, False], [True, True, True]]),
        "pred": rng.normal(size=(b, n, 6)),
        "gt": rng.normal(size=(b, n, 6)),
        "ac_vectors": [rng.normal(size=(b, n, 4)) for _ in range(2)],
        "assembled": rng.uniform(0.1, 0.9, size=(b, 1, r, r, r)),
        "shape_target": (rng.random((b, r, r, r)) > 0.5).astype(float),
    }


@pytest.mark.parametrize("stage", [1, 2, 3])
def test_stage_total_is_weighted_sum(stage, rng):
    weights = LossWeights(pi=0.5, part=2.0, trans=3.0, ac=0.7, shape=4.0, trans_s2=1.5, ac_s2=0.25)
    rep = stage_loss(stage, stage_inputs(rng), weights, epoch=3)
    expected = sum(rep.weights[t] * v for t, v in rep.terms.items())
    assert rep.total == pytest.approx(expected, rel=1e-6)
    assert set(rep.terms) == {1: {"pi", "part"}, 2: {"trans", "ac"}, 3: {"pi", "part", "trans", "ac", "shape"}}[stage]
    assert rep.epoch == 3 and rep.stage == stage


def test_stage_defaults_and_ac_off(rng):
    assert LossWeights().for_stage(3) == {"pi": 1.0, "part": 1.0, "trans": 10.0, "ac": 1.0, "shape": 10.0}
    inputs = stage_inputs(rng)
    rep = stage_loss(2, inputs, LossWeights(ac_s2=0.0))
    assert rep.total == pytest.approx(rep.terms["trans"] * 1.0)
    rep = stage_loss(2, inputs, LossWeights(), apply_ac=False)
    assert "ac" not in rep.terms


def test_stage_missing_input(rng):
    inputs = stage_inputs(rng)
    del inputs["assembled"]
    with pytest.raises(MissingLossInput, match="shape"):
        stage_loss(3, inputs, LossWeights())
    with pytest.raises(ValueError):
        LossWeights().for_stage(4)


def test_stage_grad_through_inputs(rng):
    inputs = stage_inputs(rng)
    tensors = {k: Tensor(inputs[k], requires_grad=True) for k in ("bank", "output", "pred", "assembled")}
    inputs.update(tensors)
    inputs["ac_vectors"] = [Tensor(v, requires_grad=True) for v in inputs["ac_vectors"]]
    params = list(tensors.values()) + inputs["ac_vectors"]
    assert grad_check(lambda: stage_loss(3, inputs, LossWeights()).total_tensor, params) < 1e-6


def test_weight_scaling_keeps_adam_direction(rng):
    inputs = stage_inputs(rng)
    steps = []
    for scale in (1.0, 7.0):
        w = LossWeights(pi=scale, part=scale, trans=10 * scale, ac=scale, shape=10 * scale)
        out = Parameter(inputs["output"].copy())
        rep = stage_loss(3, dict(inputs, output=out), w)
        assert rep.total == pytest.approx(scale * stage_loss(3, inputs, LossWeights()).total, rel=1e-9)
        rep.total_tensor.backward()
        before = out.data.copy()
        adam_step([out], AdamState(lr=1e-3))
        steps.append(np.sign(out.data - before))
    np.testing.assert_array_equal(steps[0], steps[1])


def test_absent_parts_trained_when_mask_covers_them(rng):
    inputs = stage_inputs(rng)
    masked = stage_loss(1, inputs, LossWeights()).terms["part"]
    inputs["part_mask"] = np.ones_like(inputs["present"])
    full = stage_loss(1, inputs, LossWeights()).terms["part"]
    assert full != masked
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        stage_loss(1, inputs, LossWeights())
