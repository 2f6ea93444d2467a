import numpy as np
import pytest

from changepoint_rul.errors import InsufficientDataError, IntegrityError
from changepoint_rul.labeling import (
    WindowedDataset,
    load_windowed,
    piecewise_rul_labels,
    piecewise_standardize,
    pooled_standardizer,
    save_windowed,
    sliding_windows,
    trailing_window,
)
from changepoint_rul.cva import apply_standardizer


class TestPiecewiseLabels:
    def test_change_point_sets_cap(self):
        spec = piecewise_rul_labels(344, 240)
        assert spec.y_max == 104
        assert spec.labels[0] == 104
        assert spec.labels[-1] == 0
        assert len(spec.labels) == 344

    def test_fallback_cap(self):
        spec = piecewise_rul_labels(150, None, fallback_cap=130)
        assert spec.y_max == 130
        assert spec.labels[0] == 130
        assert spec.labels[149] == 0
        # decay starts at cycle k_max - cap = 20
        assert spec.labels[19] == 130
        assert spec.labels[20] == 129

    def test_boundary_change_point(self):
        spec = piecewise_rul_labels(100, 99)
        assert spec.y_max == 1
        assert np.all(spec.labels[:99] == 1)
        assert spec.labels[99] == 0

    def test_nonincreasing_single_slope_change(self):
        spec = piecewise_rul_labels(300, 180)
        diffs = np.diff(spec.labels)
        assert np.all(diffs <= 0)
        assert set(diffs.tolist()) == {0, -1}
        # exactly one transition from flat to decaying
        changes = np.diff((diffs == -1).astype(int))
        assert np.sum(changes == 1) == 1

    def test_invalid_change_point(self):
        with pytest.raises(IntegrityError):
            piecewise_rul_labels(100, 100)
        with pytest.raises(IntegrityError):
            piecewise_rul_labels(100, 0)


class TestPiecewiseStandardize:
    def test_pre_reference_near_zero_post_grows(self):
        rng = np.random.default_rng(0)
        n, m, cp = 200, 4, 120
        x = rng.normal(size=(n, m))
        x[cp:] += np.linspace(0, 8, n - cp)[:, None]
        standardized, _ = piecewise_standardize(x, cp)
        assert np.abs(standardized[:cp]).mean() < 1.0
        assert np.abs(standardized[-20:]).mean() > 3.0

    def test_full_length_reference_reduces_to_zscore(self):
        rng = np.random.default_rng(1)
        x = rng.normal(loc=3.0, scale=2.0, size=(80, 3))
        standardized, s = piecewise_standardize(x, 80)
        assert np.allclose(standardized.mean(axis=0), 0.0, atol=1e-10)
        assert np.allclose(standardized.std(axis=0, ddof=1), 1.0, atol=1e-10)

    def test_deterministic_reapplication(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(100, 3))
        out1, s = piecewise_standardize(x, 60)
        out2 = apply_standardizer(s, x.T).T
        assert np.array_equal(out1, out2)

    def test_reference_too_small(self):
        with pytest.raises(InsufficientDataError):
            piecewise_standardize(np.zeros((10, 2)), 1)


class TestPooledStandardizer:
    def test_pooled_segments_standardize_to_unit(self):
        rng = np.random.default_rng(3)
        segments = [rng.normal(loc=5.0, scale=3.0, size=(n, 4)) for n in (50, 80, 120)]
        pooled = pooled_standardizer(segments)
        stacked = np.vstack(segments)
        z = apply_standardizer(pooled, stacked.T).T
        assert np.max(np.abs(z.mean(axis=0))) < 1e-8
        assert np.max(np.abs(z.std(axis=0, ddof=1) - 1.0)) < 1e-8


class TestSlidingWindows:
    def test_window_count(self):
        x = np.arange(60 * 2, dtype=float).reshape(60, 2)
        labels = np.arange(60)[::-1]
        ds = sliding_windows(x, labels, 50)
        assert len(ds) == 11
        assert ds.windows.shape == (11, 50, 2)

    def test_single_window_boundary(self):
        x = np.arange(50 * 2, dtype=float).reshape(50, 2)
        labels = np.arange(50)[::-1]
        ds = sliding_windows(x, labels, 50)
        assert len(ds) == 1
        assert ds.targets[0] == labels[49]
        assert ds.end_cycles[0] == 50

    def test_end_of_life_window_target_zero(self):
        spec = piecewise_rul_labels(344, 240)
        x = np.zeros((344, 3))
        ds = sliding_windows(x, spec.labels, 50, unit_id=116)
        assert ds.targets[-1] == 0.0
        assert ds.end_cycles[-1] == 344

    def test_consecutive_windows_overlap(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(40, 3))
        ds = sliding_windows(x, np.zeros(40), 10)
        np.testing.assert_array_equal(ds.windows[0][1:], ds.windows[1][:-1])

    def test_too_short_series_raises(self):
        with pytest.raises(InsufficientDataError):
            sliding_windows(np.zeros((10, 2)), np.zeros(10), 20)

    def test_label_length_mismatch(self):
        with pytest.raises(IntegrityError):
            sliding_windows(np.zeros((10, 2)), np.zeros(9), 5)


class TestTrailingWindow:
    def test_long_series_takes_tail(self):
        x = np.arange(20, dtype=float)[:, None]
        w = trailing_window(x, 5)
        np.testing.assert_array_equal(w.ravel(), [15, 16, 17, 18, 19])

    def test_short_series_left_pads_first_cycle(self):
        x = np.array([[1.0, 2.0], [3.0, 4.0]])
        w = trailing_window(x, 4)
        np.testing.assert_array_equal(w, [[1, 2], [1, 2], [1, 2], [3, 4]])


def test_windowed_persistence_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    ds = sliding_windows(rng.normal(size=(30, 3)), np.arange(30.0), 10, unit_id=7)
    path = tmp_path / "windows.npz"
    save_windowed(ds, path, sidecar={"dataset": "FD001", "label_cap": 130})
    loaded = load_windowed(path)
    np.testing.assert_array_equal(loaded.windows, ds.windows)
    np.testing.assert_array_equal(loaded.targets, ds.targets)
    np.testing.assert_array_equal(loaded.units, ds.units)
    sidecar = (tmp_path / "windows.npz.json").read_text()
    assert "FD001" in sidecar and "sequence_length" in sidecar


def test_concatenate_requires_parts():
    with pytest.raises(InsufficientDataError):
        WindowedDataset.concatenate([])
