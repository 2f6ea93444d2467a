import math

import numpy as np
import pytest

from changepoint_rul.cmapss import RulTarget
from changepoint_rul.cva import Standardizer
from changepoint_rul.errors import IntegrityError
from changepoint_rul.metrics import (
    evaluate_predictions,
    format_metrics_row,
    rmse,
    score_function,
    score_term,
)


def targets(values, dataset="FD001"):
    return [
        RulTarget(dataset_id=dataset, unit_id=i + 1, true_rul_at_cutoff=v)
        for i, v in enumerate(values)
    ]


class TestRmse:
    def test_perfect(self):
        assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0

    def test_spot_value(self):
        assert rmse([3.0, -4.0], [0.0, 0.0]) == pytest.approx(math.sqrt(12.5))

    def test_permutation_invariant(self):
        rng = np.random.default_rng(0)
        p = rng.normal(size=20)
        t = rng.normal(size=20)
        perm = rng.permutation(20)
        assert rmse(p, t) == pytest.approx(rmse(p[perm], t[perm]))

    def test_length_mismatch(self):
        with pytest.raises(IntegrityError):
            rmse([1.0], [1.0, 2.0])


class TestScoreFunction:
    def test_zero_errors(self):
        assert score_function([5.0, 6.0], [5.0, 6.0]) == 0.0

    def test_overestimate_spot_value(self):
        assert score_function([10.0], [0.0]) == pytest.approx(math.e - 1.0, abs=1e-9)

    def test_underestimate_spot_value(self):
        assert score_function([0.0], [13.0]) == pytest.approx(math.e - 1.0, abs=1e-9)

    def test_asymmetry_over_penalized(self):
        for k in range(1, 51):
            assert score_term(float(k)) > score_term(float(-k))

    def test_monotone_in_single_error(self):
        base = score_function([5.0, -3.0], [0.0, 0.0])
        worse_over = score_function([6.0, -3.0], [0.0, 0.0])
        worse_under = score_function([5.0, -4.0], [0.0, 0.0])
        assert worse_over > base
        assert worse_under > base

    def test_length_mismatch(self):
        with pytest.raises(IntegrityError):
            score_function([1.0], [])


class TestEvaluatePredictions:
    def test_perfect_oracle(self):
        report = evaluate_predictions({1: 40.0, 2: 80.0}, targets([40, 80]))
        assert report.rmse == 0.0
        assert report.sf == 0.0
        assert report.n == 2

    def test_capping_zeroes_contributions(self):
        # both sides above the cap contribute nothing
        report = evaluate_predictions({1: 150.0, 2: 140.0}, targets([180, 140]))
        assert report.per_engine[0].d == 0.0
        assert report.per_engine[0].true_rul == 130.0

    def test_constant_cap_matches_recomputation(self):
        rng = np.random.default_rng(1)
        values = rng.integers(5, 200, size=30).tolist()
        report = evaluate_predictions({i + 1: 130.0 for i in range(30)}, targets(values))
        capped = np.minimum(values, 130.0)
        d = 130.0 - capped
        assert report.rmse == pytest.approx(float(np.sqrt(np.mean(d * d))))
        expected_sf = sum(
            math.exp(-x / 13.0) - 1.0 if x < 0 else math.exp(x / 10.0) - 1.0 for x in d
        )
        assert report.sf == pytest.approx(expected_sf)

    def test_totals_recomputable_from_rows(self):
        rng = np.random.default_rng(2)
        preds = {i + 1: float(rng.uniform(0, 130)) for i in range(10)}
        report = evaluate_predictions(preds, targets(rng.integers(0, 150, size=10).tolist()))
        d = [row.d for row in report.per_engine]
        assert report.rmse == pytest.approx(float(np.sqrt(np.mean(np.square(d)))))
        assert report.sf == pytest.approx(sum(score_term(x) for x in d))

    def test_missing_prediction(self):
        with pytest.raises(IntegrityError, match="unit 2"):
            evaluate_predictions({1: 5.0}, targets([5, 6]))

    def test_report_files(self, tmp_path):
        report = evaluate_predictions({1: 40.0, 2: 90.0}, targets([50, 80]))
        report.write_json(tmp_path / "eval.json")
        report.write_csv(tmp_path / "eval.csv")
        assert "rmse" in (tmp_path / "eval.json").read_text()
        lines = (tmp_path / "eval.csv").read_text().strip().splitlines()
        assert len(lines) == 3
        row = format_metrics_row(report)
        assert "RMSE" in row and "FD001" in row


class TestEvaluateDataset:
    def test_prediction_per_engine_from_last_window(self):
        from changepoint_rul.lstm import init_regressor, iter_parameters
        from changepoint_rul.metrics import evaluate_dataset
        from synthetic import make_engine_series

        model = init_regressor(5, (4,), (), seed=0, sequence_length=20)
        for _, arr in iter_parameters(model):
            arr[...] = 0.0
        model.head_b[0] = 42.0
        engines = [make_engine_series(u, 60, None, seed=u, n_channels=5) for u in (1, 2)]
        standardizer = Standardizer(mean=np.zeros(5), std=np.ones(5))
        report = evaluate_dataset(model, engines, targets([42, 40]), standardizer)
        assert report.n == 2
        assert report.per_engine[0].predicted_rul == 42.0
        assert report.per_engine[0].d == 0.0

    def test_channel_mismatch_is_integrity_error(self):
        from changepoint_rul.lstm import init_regressor
        from changepoint_rul.metrics import evaluate_dataset
        from synthetic import make_engine_series

        model = init_regressor(4, (4,), (), seed=0, sequence_length=10)
        engines = [make_engine_series(1, 50, None, seed=3, n_channels=5)]
        standardizer = Standardizer(mean=np.zeros(5), std=np.ones(5))
        with pytest.raises(IntegrityError):
            evaluate_dataset(model, engines, targets([10]), standardizer)
