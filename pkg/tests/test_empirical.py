import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from plasma2d.empirical import (
    BinnedMeasure,
    averaged_window_profile,
    bin_points,
    empirical_measures,
    iid_trace,
    local_window,
    time_averaged_measures,
    uniformity_distance,
)
from plasma2d.geometry import SignedConfig


def test_bin_boundaries_go_to_lower_cell():
    m = bin_points([(0.5, 0.5), (0.0, 1.0), (1.0, 0.25), (0.51, 0.49)], 2)
    np.testing.assert_array_equal(m.counts, [[1, 1], [2, 0]])
    assert m.total == 4


def test_bin_points_errors():
    with pytest.raises(ValueError):
        bin_points([(1.1, 0.5)], 2)
    with pytest.raises(ValueError):
        bin_points([(0.5, 0.5)], 0)


@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), max_size=50), st.integers(1, 7))
def test_bin_counts_sum(points, k):
    m = bin_points(np.array(points).reshape(-1, 2), k)
    assert m.counts.sum() == m.total == len(points)
    assert np.all(m.counts >= 0)


def test_measure_addition():
    a = bin_points([(0.1, 0.1)], 2)
    b = bin_points([(0.9, 0.9), (0.2, 0.9)], 2)
    s = a + b
    assert s.total == 3
    np.testing.assert_array_equal(s.counts, [[1, 1], [0, 1]])
    with pytest.raises(ValueError):
        a + bin_points([(0.1, 0.1)], 3)
    with pytest.raises(ValueError):
        BinnedMeasure(np.ones((2, 2)), 3)


def test_uniformity_distance_extremes():
    assert uniformity_distance(BinnedMeasure(np.ones((3, 3), np.int64), 9)) == 0.0
    point = np.zeros((3, 3), np.int64)
    point[1, 2] = 5
    assert uniformity_distance(BinnedMeasure(point, 5)) == pytest.approx(1 - 1 / 9)
    with pytest.raises(ValueError, match="empty measure"):
        uniformity_distance(BinnedMeasure(np.zeros((2, 2), np.int64), 0))


def test_uniform_samples_have_small_distance():
    cfg = SignedConfig.random_uniform(20_000, rng=np.random.default_rng(0))
    plus, minus = empirical_measures(cfg, 4)
    # TV of a 16-cell multinomial sample is of order sqrt(16 / n)
    assert uniformity_distance(plus) < 0.03
    assert uniformity_distance(minus) < 0.03


def test_time_average_accumulates():
    trace = iid_trace(5, 7, seed=1)
    plus, minus = time_averaged_measures(trace, 3)
    assert plus.total == minus.total == 35
    direct = sum((empirical_measures(c, 3)[0] for c in trace[1:]), empirical_measures(trace[0], 3)[0])
    np.testing.assert_array_equal(plus.counts, direct.counts)
    tuples = [(c.pos, c.neg) for c in trace]
    np.testing.assert_array_equal(time_averaged_measures(tuples, 3)[1].counts, minus.counts)


def test_local_window_example():
    # N = 4 blows the box up by 2
    cfg = SignedConfig([(0.5, 0.5), (0.1, 0.1)], [(0.6, 0.5), (0.9, 0.9)])
    w = local_window(cfg, 4, (0.5, 0.5), 1.0)
    assert (w.n_plus, w.n_minus, w.discrepancy) == (1, 1, 0)
    # both window charges have blown-up nearest distance 0.2, so r = 0.1
    assert w.log_r_sum == pytest.approx(2 * math.log(0.1))
    assert w.retained_area == 1.0
    corner = local_window(cfg, 4, (0.0, 0.0), 1.0)
    assert corner.retained_area == pytest.approx(0.25)
    assert (corner.n_plus, corner.n_minus) == (1, 0)


def test_local_window_is_half_open():
    cfg = SignedConfig([(0.25, 0.25)], [(0.75, 0.75)])
    # blown-up by 2: the plus charge sits at (0.5, 0.5), the window [0, 0.5)^2 excludes it
    assert local_window(cfg, 4, (0.125, 0.125), 0.5).n_plus == 0
    assert local_window(cfg, 4, (0.375, 0.375), 0.5).n_plus == 1


def test_local_window_brute_force_counts():
    rng = np.random.default_rng(3)
    cfg = SignedConfig.random_uniform(50, rng=rng)
    s = math.sqrt(50)
    for tag in rng.random((20, 2)):
        w = local_window(cfg, 50, tag, 3.0)
        lo, hi = s * tag - 1.5, s * tag + 1.5
        count = lambda P: int(np.sum(np.all((s * P >= lo) & (s * P < hi), axis=1)))
        assert (w.n_plus, w.n_minus) == (count(cfg.pos), count(cfg.neg))


def test_local_window_errors():
    cfg = SignedConfig([(0.5, 0.5)], [(0.6, 0.5)])
    with pytest.raises(ValueError):
        local_window(cfg, 1, (0.5, 0.5), 0.0)


def test_profile_intensity_matches_retained_area_for_uniform_points():
    trace = iid_trace(64, 200, seed=5)
    prof = averaged_window_profile(trace, 64, 2.0, n_tags=20, seed=1)
    for mean, se in ((prof.mean_intensity_plus, prof.se_intensity_plus),
                     (prof.mean_intensity_minus, prof.se_intensity_minus)):
        assert abs(mean - prof.mean_retained_area) < 4 * se + 0.01
    assert prof.n_samples == 200
    assert set(prof.csv_row()) == {"R", "mean_intensity_plus", "mean_intensity_minus",
                                   "mean_abs_discrepancy", "mean_logr_density", "n_samples"}


def test_profile_is_deterministic():
    trace = iid_trace(16, 10, seed=2)
    a = averaged_window_profile(trace, 16, 1.5, n_tags=5, seed=3)
    b = averaged_window_profile(trace, 16, 1.5, n_tags=5, seed=3)
    assert a == b
    assert averaged_window_profile(trace, 16, 1.5, n_tags=5, seed=4) != a


def test_profile_errors():
    with pytest.raises(ValueError):
        averaged_window_profile([], 4, 1.0, 5)
    with pytest.raises(ValueError):
        averaged_window_profile(iid_trace(4, 2), 4, 1.0, 0)
