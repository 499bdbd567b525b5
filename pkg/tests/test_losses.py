import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from confloss import (
    BinaryMask,
    Grid1,
    Grid2,
    MODES,
    SequenceParams,
    WeightSpec,
    build_weights,
    evaluate_loss,
    sequence_loss,
    weight_combine,
    weight_db,
    weight_oa,
    weighted_l1,
)


def random_instance(rng, h=8, w=8):
    pred = Grid2(rng.normal(0, 2, (h, w, 2)))
    gt = Grid2(rng.normal(0, 2, (h, w, 2)))
    bw = Grid2(rng.normal(0, 2, (h, w, 2)))
    valid = BinaryMask(rng.random((h, w)) > 0.1)
    if not valid.data.any():
        valid = BinaryMask.full(h, w)
    return pred, gt, bw, valid


def spec_for(mode):
    return WeightSpec.flow_defaults(mode)


class TestWeightDb:
    def test_full_confidence_is_plain(self):
        m = Grid1.full(2, 2, 1.0)
        np.testing.assert_array_equal(weight_db(m, 2.0, 0.5).data, np.ones((2, 2)))

    def test_zero_confidence(self):
        assert weight_db(Grid1.zeros(1, 1), 2.0, 0.5).data[0, 0] == 3.0

    def test_intermediate(self):
        assert weight_db(Grid1.full(1, 1, 0.75), 2.0, 0.5).data[0, 0] == pytest.approx(2.0)

    def test_rfl_special_case(self):
        m = Grid1(np.linspace(0, 1, 12).reshape(3, 4))
        np.testing.assert_array_equal(weight_db(m, 1.0, 1.0).data, 1.0 + (1.0 - m.data))

    def test_bad_beta(self):
        with pytest.raises(ValueError):
            weight_db(Grid1.zeros(1, 1), 2.0, 0.0)

    def test_rejects_out_of_range_confidence(self):
        with pytest.raises(ValueError):
            weight_db(Grid1.full(1, 1, 1.5), 2.0, 0.5)


class TestWeightOa:
    def test_occluded_is_plain(self):
        assert weight_oa(Grid1.zeros(1, 1), 2.0, 1.0).data[0, 0] == 1.0

    def test_full_confidence(self):
        assert weight_oa(Grid1.full(1, 1, 1.0), 2.0, 1.0).data[0, 0] == 3.0

    def test_half(self):
        assert weight_oa(Grid1.full(1, 1, 0.5), 1.0, 1.0).data[0, 0] == 1.5


class TestWeightCombine:
    def test_multiplication_zero_cycle_confidence(self):
        w = weight_combine(Grid1.zeros(1, 1), Grid1.zeros(1, 1),
                           BinaryMask.full(1, 1), spec_for("multiplication"))
        assert w.data[0, 0] == 1.0

    def test_masking_occluded_is_plain(self):
        w = weight_combine(Grid1.zeros(1, 1), Grid1.zeros(1, 1),
                           BinaryMask.full(1, 1, False), spec_for("masking"))
        assert w.data[0, 0] == 1.0

    def test_mask_sum_example(self):
        spec = WeightSpec(mode="mask_sum", alpha1=2, beta1=1, alpha2=2, beta2=1)
        w = weight_combine(Grid1.zeros(1, 1), Grid1.full(1, 1, 1.0),
                           BinaryMask.full(1, 1), spec)
        assert w.data[0, 0] == 5.0

    def test_rejects_standalone_mode(self):
        with pytest.raises(ValueError):
            weight_combine(Grid1.zeros(1, 1), Grid1.zeros(1, 1),
                           BinaryMask.full(1, 1), spec_for("db"))

    @given(st.sampled_from(("sum", "multiplication", "masking", "mask_sum")),
           st.integers(0, 2**32 - 1))
    def test_matches_bruteforce(self, mode, seed):
        rng = np.random.default_rng(seed)
        m_db = Grid1(rng.random((4, 5)))
        m_oa = Grid1(rng.random((4, 5)))
        hard = BinaryMask(rng.random((4, 5)) > 0.5)
        spec = spec_for(mode)
        w = weight_combine(m_db, m_oa, hard, spec)
        for y in range(4):
            for x in range(5):
                expected = oracles.weight(mode, m_db.data[y, x], m_oa.data[y, x],
                                          hard.data[y, x], spec.alpha1, spec.beta1,
                                          spec.alpha2, spec.beta2)
                assert w.data[y, x] == pytest.approx(expected, abs=1e-12)


class TestWeightedL1:
    def test_perfect_prediction(self):
        gt = Grid2(np.random.default_rng(0).normal(size=(3, 3, 2)))
        res = weighted_l1(gt, gt, Grid1.full(3, 3, 1.0), BinaryMask.full(3, 3))
        assert res.scalar == 0.0
        assert (res.grad.data == 0).all()

    def test_single_pixel_hand_values(self):
        pred = Grid2.zeros(1, 1)
        gt = Grid2.constant(1, 1, 0.5, -0.5)
        res = weighted_l1(pred, gt, Grid1.full(1, 1, 2.0), BinaryMask.full(1, 1))
        assert res.scalar == pytest.approx(2.0)
        np.testing.assert_allclose(res.grad.data[0, 0], [-2.0, 2.0])

    def test_unit_weights_match_plain_mean(self):
        rng = np.random.default_rng(3)
        pred, gt = Grid2(rng.normal(size=(4, 4, 2))), Grid2(rng.normal(size=(4, 4, 2)))
        res = weighted_l1(pred, gt, Grid1.full(4, 4, 1.0), BinaryMask.full(4, 4))
        expected = np.abs(gt.data - pred.data).sum(axis=-1).mean()
        assert res.scalar == pytest.approx(expected, rel=1e-15)

    def test_no_valid_pixels(self):
        with pytest.raises(ValueError, match="no valid pixels"):
            weighted_l1(Grid2.zeros(2, 2), Grid2.zeros(2, 2),
                        Grid1.full(2, 2, 1.0), BinaryMask.full(2, 2, False))

    def test_grad_zero_on_invalid(self):
        valid = BinaryMask(np.array([[True, False]]))
        pred = Grid2.zeros(1, 2)
        gt = Grid2.constant(1, 2, 1.0, 1.0)
        res = weighted_l1(pred, gt, Grid1.full(1, 2, 1.0), valid)
        assert (res.grad.data[0, 1] == 0).all()
        assert (res.grad.data[0, 0] == -1).all()

    def test_scalar_is_mean_of_loss_map(self):
        rng = np.random.default_rng(5)
        pred, gt, _, valid = random_instance(rng)
        w = Grid1(1.0 + rng.random((8, 8)))
        res = weighted_l1(pred, gt, w, valid)
        assert res.scalar == pytest.approx(res.loss_map.data[valid.data].mean(),
                                           rel=1e-15)

    def test_stereo_grad_sign(self):
        pred = Grid1.zeros(1, 2)
        gt = Grid1(np.array([[2.0, -3.0]]))
        res = weighted_l1(pred, gt, Grid1.full(1, 2, 2.0), BinaryMask.full(1, 2))
        np.testing.assert_allclose(res.grad.data, [[-2.0, 2.0]])

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30)
    def test_scalar_matches_bruteforce(self, seed):
        rng = np.random.default_rng(seed)
        pred, gt, _, valid = random_instance(rng)
        w = Grid1(1.0 + 2.0 * rng.random((8, 8)))
        res = weighted_l1(pred, gt, w, valid)
        expected = oracles.weighted_l1_scalar(pred.data.tolist(), gt.data.tolist(),
                                              w.data.tolist(), valid.data.tolist())
        assert res.scalar == pytest.approx(expected, abs=1e-12)


def finite_difference_grad(pred, gt, weights, valid, step=1e-4):
    """Central differences of the brute-force mean loss, times n_valid."""
    n_valid = int(valid.data.sum())
    fd = np.zeros_like(pred.data)
    it = np.ndindex(pred.data.shape)
    for idx in it:
        bumped = pred.data.copy()
        bumped[idx] += step
        up = oracles.weighted_l1_scalar(bumped.tolist(), gt.data.tolist(),
                                        weights.data.tolist(), valid.data.tolist())
        bumped[idx] -= 2 * step
        down = oracles.weighted_l1_scalar(bumped.tolist(), gt.data.tolist(),
                                          weights.data.tolist(), valid.data.tolist())
        fd[idx] = (up - down) / (2 * step) * n_valid
    return fd


@pytest.mark.parametrize("mode", MODES)
def test_gradient_matches_finite_differences(mode):
    rng = np.random.default_rng(hash(mode) % 2**32)
    pred, gt, bw, valid = random_instance(rng, 6, 6)
    weights = build_weights(spec_for(mode), pred, gt, valid, backward=bw)
    res = weighted_l1(pred, gt, weights, valid)
    fd = finite_difference_grad(pred, gt, weights, valid)
    away_from_kink = np.all(np.abs(gt.data - pred.data) >= 0.1, axis=-1)
    check = valid.data & away_from_kink
    rel = np.abs(res.grad.data - fd) / np.maximum(np.abs(fd), 1e-12)
    assert rel[check].max() < 1e-3


class TestModeIdentities:
    def test_alpha_zero_reproduces_plain_l1(self):
        rng = np.random.default_rng(11)
        pred, gt, bw, valid = random_instance(rng)
        plain = evaluate_loss(pred, gt, valid, spec_for("plain_l1"), backward=bw)
        for mode in MODES:
            spec = WeightSpec.flow_defaults(mode, alpha1=0.0, alpha2=0.0)
            res = evaluate_loss(pred, gt, valid, spec, backward=bw)
            assert res.scalar == plain.scalar
            np.testing.assert_array_equal(res.grad.data, plain.grad.data)
            np.testing.assert_array_equal(res.weight_map.data, plain.weight_map.data)

    def test_multiplication_with_zero_cycle_confidence_is_plain(self):
        rng = np.random.default_rng(13)
        pred, gt, _, valid = random_instance(rng)
        # Backward flow pointing far off-frame: cycle confidence 0 everywhere.
        bw = Grid2.constant(8, 8, 1000.0, 0.0)
        fw_off = Grid2.constant(8, 8, 1000.0, 0.0)
        res = evaluate_loss(pred, gt, valid, spec_for("multiplication"), backward=fw_off)
        plain = evaluate_loss(pred, gt, valid, spec_for("plain_l1"))
        assert res.scalar == plain.scalar

    def test_masking_with_all_occluded_is_plain(self):
        rng = np.random.default_rng(17)
        pred, gt, _, valid = random_instance(rng)
        bw = Grid2.constant(8, 8, 1000.0, 0.0)
        res = evaluate_loss(pred, gt, valid, spec_for("masking"), backward=bw)
        plain = evaluate_loss(pred, gt, valid, spec_for("plain_l1"))
        assert res.scalar == plain.scalar

    @pytest.mark.parametrize("mode", MODES)
    def test_weights_at_least_one(self, mode):
        rng = np.random.default_rng(19)
        pred, gt, bw, valid = random_instance(rng)
        w = build_weights(spec_for(mode), pred, gt, valid, backward=bw)
        assert (w.data >= 1.0).all()
        res = weighted_l1(pred, gt, w, valid)
        plain = evaluate_loss(pred, gt, valid, spec_for("plain_l1"))
        assert res.scalar >= plain.scalar - 1e-12

    def test_stop_gradient_semantics(self):
        # Weights built from a different prediction change the grad only
        # through the weight values; the residual path stays pred vs gt.
        rng = np.random.default_rng(23)
        pred, gt, bw, valid = random_instance(rng)
        other = Grid2(pred.data + rng.normal(0, 0.5, pred.data.shape))
        w = build_weights(spec_for("db"), other, gt, valid)
        res = weighted_l1(pred, gt, w, valid)
        expected = np.where(valid.data[..., None],
                            w.data[..., None] * -np.sign(gt.data - pred.data), 0.0)
        np.testing.assert_array_equal(res.grad.data, expected)

    def test_oa_mode_requires_backward(self):
        pred = Grid2.zeros(2, 2)
        with pytest.raises(ValueError, match="backward"):
            evaluate_loss(pred, pred, BinaryMask.full(2, 2), spec_for("oa"))


class TestSequenceLoss:
    def test_single_prediction(self):
        pred = Grid2.zeros(1, 1)
        gt = Grid2.constant(1, 1, 1.0, 0.0)
        total, per_iter = sequence_loss([pred], gt, BinaryMask.full(1, 1),
                                        spec_for("plain_l1"))
        assert total == per_iter[0].scalar == pytest.approx(1.0)

    def test_three_unit_losses(self):
        pred = Grid2.zeros(1, 1)
        gt = Grid2.constant(1, 1, 1.0, 0.0)
        total, per_iter = sequence_loss([pred] * 3, gt, BinaryMask.full(1, 1),
                                        spec_for("plain_l1"), SequenceParams(0.8))
        assert [r.scalar for r in per_iter] == [1.0, 1.0, 1.0]
        assert total == pytest.approx(2.44, abs=1e-12)

    def test_no_discount_is_plain_sum(self):
        rng = np.random.default_rng(29)
        gt = Grid2(rng.normal(size=(3, 3, 2)))
        preds = [Grid2(rng.normal(size=(3, 3, 2))) for _ in range(4)]
        total, per_iter = sequence_loss(preds, gt, BinaryMask.full(3, 3),
                                        spec_for("plain_l1"), SequenceParams(1.0))
        assert total == pytest.approx(sum(r.scalar for r in per_iter), rel=1e-15)

    def test_latest_iteration_weighs_most(self):
        gt = Grid2.constant(1, 1, 1.0, 0.0)
        early = Grid2.zeros(1, 1)          # loss 1
        late = Grid2.constant(1, 1, 0.9, 0.0)  # loss 0.1
        total, _ = sequence_loss([early, late], gt, BinaryMask.full(1, 1),
                                 spec_for("plain_l1"), SequenceParams(0.5))
        assert total == pytest.approx(0.5 * 1.0 + 0.1)

    def test_empty_list(self):
        with pytest.raises(ValueError, match="empty"):
            sequence_loss([], Grid2.zeros(1, 1), BinaryMask.full(1, 1),
                          spec_for("plain_l1"))

    def test_confidence_rebuilt_per_iteration(self):
        gt = Grid2.constant(1, 1, 1.0, 0.0)
        preds = [Grid2.zeros(1, 1), Grid2.constant(1, 1, 0.5, 0.0)]
        _, per_iter = sequence_loss(preds, gt, BinaryMask.full(1, 1), spec_for("db"))
        w0, w1 = per_iter[0].weight_map.data[0, 0], per_iter[1].weight_map.data[0, 0]
        assert w0 > w1  # earlier prediction is worse, so it weighs more

    def test_backward_list_length_checked(self):
        pred = Grid2.zeros(1, 1)
        with pytest.raises(ValueError):
            sequence_loss([pred, pred], pred, BinaryMask.full(1, 1),
                          spec_for("oa"), backwards=[pred])

    def test_gamma_seq_validation(self):
        with pytest.raises(ValueError):
            SequenceParams(0.0)
        with pytest.raises(ValueError):
            SequenceParams(1.2)


class TestWeightSpec:
    def test_mode_validation(self):
        with pytest.raises(ValueError):
            WeightSpec(mode="charbonnier")

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            WeightSpec(alpha1=-1.0)
        with pytest.raises(ValueError):
            WeightSpec(beta2=0.0)

    def test_task_defaults(self):
        f = WeightSpec.flow_defaults("db")
        s = WeightSpec.stereo_defaults("db")
        assert (f.alpha1, f.beta1, f.alpha2, f.beta2) == (2.0, 0.5, 2.0, 1.0)
        assert (s.alpha1, s.beta1, s.alpha2, s.beta2) == (2.0, 1.0, 1.0, 1.0)
