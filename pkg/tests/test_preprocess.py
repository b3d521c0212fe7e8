import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from eyelstm.core_data import DataValidationError, EyeSample, FrameDims, PointSeries, TrackBox
from eyelstm.preprocess import (PAD, PADDED, WINDOW, EmptySeriesError, FilterConfig, Padded30, Window24,
                                align_eye_to_frames, denormalize, extract_frame_feature, eye_features, fill_gaps,
                                heuristic_filter, make_windows, mirror_pad, normalize, rescale_coords,
                                track_features, unwindow)

DIMS = FrameDims(720, 400, 1440, 900)


def series1d(values):
    v = np.asarray(values, dtype=np.float64)
    return PointSeries(np.column_stack([v, v]))


def filtered(values, theta1=30.0, theta2=30.0):
    return heuristic_filter(series1d(values), FilterConfig(theta1, theta2)).points[:, 0]


class TestAlign:
    def test_two_frames(self):
        samples = [EyeSample(t, t, t, True) for t in (0, 18, 36, 54, 72)]
        groups = align_eye_to_frames(samples, 70, 2)
        assert [[s.t_ms for s in g] for g in groups] == [[0, 18, 36, 54], [72]]

    def test_no_samples(self):
        assert align_eye_to_frames([], 70, 3) == [[], [], []]

    def test_invalid_excluded(self):
        samples = [EyeSample(0, 1, 1, True), EyeSample(18, 0, 0, False), EyeSample(36, 2, 2, True)]
        assert [s.t_ms for s in align_eye_to_frames(samples, 70, 1)[0]] == [0, 36]

    def test_samples_past_last_frame_dropped(self):
        groups = align_eye_to_frames([EyeSample(500, 1, 1, True)], 70, 2)
        assert groups == [[], []]


class TestFrameFeature:
    @staticmethod
    def group(*pts):
        return [EyeSample(i, x, y, True) for i, (x, y) in enumerate(pts)]

    def test_uniform_mean(self):
        assert extract_frame_feature(self.group((100, 90), (102, 92), (104, 94))) == (102, 92)

    def test_singleton(self):
        assert extract_frame_feature(self.group((10, 10))) == (10, 10)

    def test_weighted(self):
        assert extract_frame_feature(self.group((0, 0), (10, 10)), weights=(1, 3)) == (7.5, 7.5)

    def test_empty_group_is_absent(self):
        assert extract_frame_feature([]) is None

    def test_weight_length_mismatch(self):
        with pytest.raises(DataValidationError):
            extract_frame_feature(self.group((0, 0)), weights=(1, 2))

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.floats(-1e4, 1e4), st.floats(-1e4, 1e4), st.floats(1e-3, 1e3)),
                    min_size=1, max_size=12))
    def test_within_group_range(self, rows):
        g = self.group(*[(x, y) for x, y, _ in rows])
        x, y = extract_frame_feature(g, weights=[w for *_, w in rows])
        xs, ys = [r[0] for r in rows], [r[1] for r in rows]
        assert min(xs) <= x <= max(xs)
        assert min(ys) <= y <= max(ys)


class TestFillGaps:
    def test_midpoint(self):
        np.testing.assert_array_equal(fill_gaps([(0, 0), None, (2, 2)]).points, [[0, 0], [1, 1], [2, 2]])

    def test_edge_hold(self):
        np.testing.assert_array_equal(fill_gaps([None, (5, 5)]).points, [[5, 5], [5, 5]])

    def test_all_absent(self):
        with pytest.raises(EmptySeriesError, match="no valid samples"):
            fill_gaps([None, None])


class TestRescaleNormalize:
    @pytest.mark.parametrize("display, original", [((1440, 900), (720, 400)), ((0, 0), (0, 0)),
                                                   ((720, 450), (360, 200))])
    def test_rescale(self, display, original):
        out = rescale_coords(PointSeries([display], "pixels_display"), DIMS)
        np.testing.assert_allclose(out.points[0], original, rtol=1e-15)
        assert out.space == "pixels_original"

    @pytest.mark.parametrize("px, norm", [((720, 400), (1, 1)), ((0, 0), (0, 0)), ((360, 100), (0.5, 0.25))])
    def test_normalize(self, px, norm):
        out = normalize(PointSeries([px]), DIMS)
        np.testing.assert_array_equal(out.points[0], norm)
        assert out.space == "normalized"

    def test_rescale_inverse(self, rng):
        pts = rng.uniform(0, 1440, size=(50, 2))
        back = rescale_coords(PointSeries(pts, "pixels_display"), DIMS).points * [2.0, 2.25]
        np.testing.assert_allclose(back, pts, rtol=1e-12)

    def test_denormalize_inverts_normalize(self, rng):
        pts = rng.uniform(0, 1, size=(20, 2)) * [720, 400]
        np.testing.assert_allclose(denormalize(normalize(PointSeries(pts), DIMS).points, DIMS), pts, rtol=1e-14)


class TestHeuristicFilter:
    def test_single_spike_removed(self):
        np.testing.assert_array_equal(filtered([0, 0, 50, 0, 0]), [0, 0, 0, 0, 0])

    def test_constant_unchanged(self):
        np.testing.assert_array_equal(filtered([7.0] * 9), [7.0] * 9)

    def test_ramp_unchanged(self):
        np.testing.assert_array_equal(filtered([0, 10, 20, 30, 40]), [0, 10, 20, 30, 40])

    def test_spike_snaps_to_nearer_neighbour(self):
        # |50-0| > |50-10|, so the spike takes the right neighbour's value
        np.testing.assert_array_equal(filtered([0, 0, 50, 10, 10]), [0, 0, 10, 10, 10])

    def test_two_sample_excursion_interpolated(self):
        np.testing.assert_array_equal(filtered([0, 0, 50, 50, 0, 0]), [0] * 6)

    def test_pair_replaced_by_line(self):
        # baseline 0 -> 30 through steps 1..4; the pair sits 60 above it
        np.testing.assert_allclose(filtered([0, 0, 70, 80, 30, 30]), [0, 0, 10, 20, 30, 30])

    def test_below_threshold_untouched(self):
        np.testing.assert_array_equal(filtered([0, 0, 25, 0, 0]), [0, 0, 25, 0, 0])

    def test_short_series_pass_through(self):
        np.testing.assert_array_equal(filtered([0, 100]), [0, 100])

    def test_coordinates_independent(self):
        s = PointSeries([[0, 0], [0, 0], [50, 0], [0, 0], [0, 0]])
        out = heuristic_filter(s, FilterConfig()).points
        np.testing.assert_array_equal(out, np.zeros((5, 2)))

    def test_thresholds_must_be_positive(self):
        with pytest.raises(DataValidationError):
            FilterConfig(0.0, 30.0)

    @settings(max_examples=200, deadline=None)
    @given(arrays(np.float64, st.integers(1, 60), elements=st.floats(-500, 500)))
    def test_bounded_by_input_range(self, v):
        out = filtered(v)
        assert out.min() >= v.min() and out.max() <= v.max()

    @settings(max_examples=100, deadline=None)
    @given(arrays(np.float64, st.integers(1, 60), elements=st.floats(-10, 10)))
    def test_identity_on_small_deviations(self, steps):
        v = np.cumsum(steps)  # neighbour gaps <= 10 px, deviations <= 20 px < 30
        np.testing.assert_array_equal(filtered(v), v)


class TestWindows:
    @pytest.mark.parametrize("n, count, tail", [(48, 2, 0), (50, 3, 22), (24, 1, 0), (1, 1, 23)])
    def test_counts_and_tail(self, n, count, tail):
        ws = make_windows(PointSeries(np.arange(2 * n, dtype=float).reshape(n, 2)))
        assert len(ws) == count
        assert ws[-1].padded_tail == tail
        assert all(w.padded_tail == 0 for w in ws[:-1])

    def test_tail_replicates_last_point(self):
        pts = np.arange(100, dtype=float).reshape(50, 2)
        last = make_windows(PointSeries(pts))[-1]
        np.testing.assert_array_equal(last.steps[:2], pts[48:])
        np.testing.assert_array_equal(last.steps[2:], np.repeat(pts[-1:], 22, axis=0))
        assert last.origin_index == 48

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 300), st.integers(0, 2**32 - 1))
    def test_concatenation_reconstructs(self, n, seed):
        pts = np.random.default_rng(seed).normal(size=(n, 2))
        np.testing.assert_array_equal(unwindow(make_windows(PointSeries(pts))), pts)

    def test_empty_series(self):
        with pytest.raises(EmptySeriesError):
            make_windows(PointSeries(np.zeros((0, 2))))

    def test_window_shape_enforced(self):
        with pytest.raises(DataValidationError):
            Window24(np.zeros((23, 2)))
        with pytest.raises(DataValidationError):
            Padded30(np.zeros((24, 2)))


class TestMirrorPad:
    def test_constant(self):
        out = mirror_pad(Window24(np.full((WINDOW, 2), 3.5)))
        np.testing.assert_array_equal(out.steps, np.full((PADDED, 2), 3.5))

    def test_ramp(self):
        x = np.arange(1, 25, dtype=float)
        out = mirror_pad(Window24(np.column_stack([x, -x]))).steps[:, 0]
        np.testing.assert_array_equal(out, [4, 3, 2, *range(1, 25), 23, 22, 21])

    @settings(max_examples=100, deadline=None)
    @given(arrays(np.float64, (WINDOW, 2), elements=st.floats(-1e6, 1e6)))
    def test_middle_is_window(self, steps):
        out = mirror_pad(Window24(steps)).steps
        assert out.shape == (PADDED, 2)
        np.testing.assert_array_equal(out[PAD:PAD + WINDOW], steps)


class TestStreamFeatures:
    def test_eye_features_shape_and_space(self):
        samples = [EyeSample(18.0 * i, 720 + i, 450, True) for i in range(40)]
        out = eye_features(samples, n_frames=10, dims=DIMS)
        assert len(out) == 10 and out.space == "normalized"

    def test_eye_features_hold_before_first_sample(self):
        samples = [EyeSample(150.0, 720.0, 450.0, True)]
        out = eye_features(samples, n_frames=4, dims=DIMS)
        np.testing.assert_allclose(out.points, np.full((4, 2), 0.5))

    def test_track_features_are_normalized_centers(self):
        out = track_features([TrackBox(0, 350, 190, 20, 20)], DIMS)
        np.testing.assert_allclose(out.points, [[0.5, 0.5]])

    def test_empty_track_stream(self):
        with pytest.raises(EmptySeriesError):
            track_features([], DIMS)
