import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from confloss import (
    BinaryMask,
    CycleParams,
    Grid1,
    Grid2,
    confidence_db_flow,
    confidence_db_stereo,
    confidence_oa,
    confidence_oa_stereo,
    cycle_terms,
    occlusion_mask,
)

flows = st.floats(min_value=-10, max_value=10, allow_nan=False, width=32)


def flow_pairs(max_side=8):
    return st.tuples(st.integers(1, max_side), st.integers(1, max_side)).flatmap(
        lambda hw: st.tuples(arrays(np.float64, (hw[0], hw[1], 2), elements=flows),
                             arrays(np.float64, (hw[0], hw[1], 2), elements=flows)))


class TestCycleParams:
    def test_defaults(self):
        p = CycleParams()
        assert p.gamma1 == 0.01 and p.gamma2 == 0.5

    def test_invariants(self):
        with pytest.raises(ValueError):
            CycleParams(gamma1=-0.1)
        with pytest.raises(ValueError):
            CycleParams(gamma2=0.0)


class TestErrorConfidence:
    def test_perfect_prediction(self):
        gt = Grid2(np.random.default_rng(1).normal(size=(4, 4, 2)))
        m = confidence_db_flow(gt, gt, BinaryMask.full(4, 4))
        np.testing.assert_array_equal(m.data, np.ones((4, 4)))

    def test_unit_error(self):
        pred = Grid2.zeros(1, 1)
        gt = Grid2.constant(1, 1, 1.0, 0.0)
        m = confidence_db_flow(pred, gt, BinaryMask.full(1, 1))
        assert m.data[0, 0] == pytest.approx(math.exp(-1), rel=1e-12)

    def test_three_four_error(self):
        pred = Grid2.zeros(1, 1)
        gt = Grid2.constant(1, 1, 3.0, 4.0)
        m = confidence_db_flow(pred, gt, BinaryMask.full(1, 1))
        assert m.data[0, 0] == pytest.approx(math.exp(-25), rel=1e-12)

    def test_invalid_pixels_zeroed(self):
        valid = BinaryMask(np.array([[True, False]]))
        m = confidence_db_flow(Grid2.zeros(1, 2), Grid2.zeros(1, 2), valid)
        np.testing.assert_array_equal(m.data, [[1.0, 0.0]])

    def test_stereo_values(self):
        pred = Grid1.zeros(1, 3)
        gt = Grid1(np.array([[0.0, 1.0, 10.0]]))
        m = confidence_db_stereo(pred, gt, BinaryMask.full(1, 3))
        assert m.data[0, 0] == 1.0
        assert m.data[0, 1] == pytest.approx(math.exp(-1), rel=1e-12)
        assert m.data[0, 2] == pytest.approx(math.exp(-100), rel=1e-6)
        assert (m.data >= 0).all() and (m.data <= 1).all()

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension mismatch"):
            confidence_db_flow(Grid2.zeros(2, 2), Grid2.zeros(3, 3),
                               BinaryMask.full(2, 2))

    @given(st.floats(0.01, 5), st.floats(0.01, 5))
    def test_strictly_decreasing_in_error(self, e1, e2):
        lo, hi = sorted((e1, e2))
        if lo == hi:
            return
        gt = Grid1.zeros(1, 2)
        pred = Grid1(np.array([[lo, hi]]))
        m = confidence_db_stereo(pred, gt, BinaryMask.full(1, 2))
        assert m.data[0, 0] > m.data[0, 1]


class TestCycleTerms:
    def test_consistent_pixel(self):
        fw = Grid2.constant(1, 5, 2.0, 0.0)
        bw = Grid2.constant(1, 5, -2.0, 0.0)
        num, den, valid = cycle_terms(fw, bw)
        assert valid.data[0, 0] and valid.data[0, 2]
        assert num.data[0, 0] == 0.0
        assert den.data[0, 0] == pytest.approx(0.58, abs=1e-15)

    def test_inconsistent_pixel(self):
        fw = Grid2.constant(1, 8, 5.0, 0.0)
        bw = Grid2.zeros(1, 8)
        num, den, valid = cycle_terms(fw, bw)
        assert valid.data[0, 0]
        assert num.data[0, 0] == pytest.approx(25.0)
        assert den.data[0, 0] == pytest.approx(0.75)

    def test_zero_flows(self):
        num, den, valid = cycle_terms(Grid2.zeros(3, 3), Grid2.zeros(3, 3))
        assert (num.data == 0).all()
        np.testing.assert_allclose(den.data, 0.5)
        assert valid.data.all()


class TestOcclusionMask:
    def test_consistent_is_matched(self):
        fw = Grid2.constant(2, 6, 2.0, 0.0)
        bw = Grid2.constant(2, 6, -2.0, 0.0)
        mask = occlusion_mask(fw, bw)
        # Warp targets of the last two columns leave the frame.
        np.testing.assert_array_equal(mask.data[:, :4], True)
        np.testing.assert_array_equal(mask.data[:, 4:], False)

    def test_inconsistent_is_occluded(self):
        fw = Grid2.constant(1, 8, 5.0, 0.0)
        bw = Grid2.zeros(1, 8)
        assert not occlusion_mask(fw, bw).data[0, 0]  # 25 >= 0.75

    def test_off_frame_is_occluded(self):
        fw = Grid2.constant(3, 3, 50.0, 0.0)
        bw = Grid2.zeros(3, 3)
        assert not occlusion_mask(fw, bw).data.any()

    @given(flow_pairs())
    def test_matches_bruteforce(self, pair):
        fw_arr, bw_arr = pair
        mask = occlusion_mask(Grid2(fw_arr), Grid2(bw_arr))
        _, _, _, expected = oracles.cycle_check(fw_arr.tolist(), bw_arr.tolist(),
                                                0.01, 0.5)
        np.testing.assert_array_equal(mask.data, np.array(expected))


class TestCycleConfidence:
    def test_consistent_pixel_full_confidence(self):
        fw = Grid2.constant(1, 5, 2.0, 0.0)
        bw = Grid2.constant(1, 5, -2.0, 0.0)
        m = confidence_oa(fw, bw)
        assert m.data[0, 0] == 1.0

    def test_ratio_value(self):
        fw = Grid2.constant(1, 8, 5.0, 0.0)
        bw = Grid2.zeros(1, 8)
        m = confidence_oa(fw, bw)
        assert m.data[0, 0] == pytest.approx(math.exp(-25 / 0.75), rel=1e-12)

    def test_unit_ratio(self):
        # Equal numerator and denominator: confidence exp(-1).
        num, den, _ = cycle_terms(Grid2.constant(1, 4, 2.0, 0.0),
                                  Grid2.constant(1, 4, -2.0, 0.0))
        assert math.exp(-0.58 / 0.58) == pytest.approx(math.exp(-1))

    def test_out_of_bounds_zero(self):
        fw = Grid2.constant(2, 2, 10.0, 0.0)
        bw = Grid2.zeros(2, 2)
        assert (confidence_oa(fw, bw).data == 0).all()

    @given(flow_pairs())
    def test_range_and_threshold_equivalence(self, pair):
        fw_arr, bw_arr = pair
        fw, bw = Grid2(fw_arr), Grid2(bw_arr)
        m = confidence_oa(fw, bw)
        assert (m.data >= 0).all() and (m.data <= 1).all()
        _, _, valid = cycle_terms(fw, bw)
        mask = occlusion_mask(fw, bw)
        # matched <=> ratio < 1 <=> confidence > exp(-1), on valid targets
        expected = valid.data & (m.data > math.exp(-1))
        np.testing.assert_array_equal(mask.data, expected)

    @given(flow_pairs())
    def test_matches_bruteforce(self, pair):
        fw_arr, bw_arr = pair
        m = confidence_oa(Grid2(fw_arr), Grid2(bw_arr))
        expected = oracles.confidence_oa(fw_arr.tolist(), bw_arr.tolist(), 0.01, 0.5)
        np.testing.assert_allclose(m.data, np.array(expected), atol=1e-12)


class TestStereoCycleConfidence:
    def test_consistent_constant_pair(self):
        d = Grid1.full(4, 8, 2.0)
        m = confidence_oa_stereo(d, d)
        assert (m.data[:, 2:] == 1.0).all()
        assert (m.data[:, :2] == 0.0).all()  # targets left of the frame

    def test_mismatched_pixel(self):
        d_lr = Grid1.full(1, 8, 5.0)
        d_rl = Grid1.zeros(1, 8)
        m = confidence_oa_stereo(d_lr, d_rl)
        assert m.data[0, 6] == pytest.approx(math.exp(-25 / 0.75), rel=1e-12)

    def test_zero_disparities(self):
        m = confidence_oa_stereo(Grid1.zeros(3, 3), Grid1.zeros(3, 3))
        np.testing.assert_array_equal(m.data, np.ones((3, 3)))

    def test_equals_flow_path(self):
        rng = np.random.default_rng(7)
        d_lr = Grid1(rng.uniform(0, 3, (5, 7)))
        d_rl = Grid1(rng.uniform(0, 3, (5, 7)))
        from confloss import LEFT_TO_RIGHT, RIGHT_TO_LEFT, disparity_to_flow
        via_flow = confidence_oa(disparity_to_flow(d_lr, LEFT_TO_RIGHT),
                                 disparity_to_flow(d_rl, RIGHT_TO_LEFT))
        np.testing.assert_array_equal(confidence_oa_stereo(d_lr, d_rl).data,
                                      via_flow.data)
