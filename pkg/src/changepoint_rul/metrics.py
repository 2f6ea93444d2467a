"""RMSE and the asymmetric score function, plus per-dataset reports.

The score function penalizes overestimating remaining life more heavily
than underestimating it, since late maintenance is costlier than early.
Both the true and estimated RUL of test engines are capped before scoring.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import IntegrityError

# Asymmetry constants of the benchmark score term exp(d/scale) - 1.
SF_UNDER_SCALE = 13.0  # d < 0: estimate below truth (early warning)
SF_OVER_SCALE = 10.0  # d >= 0: estimate above truth (late warning)


def rmse(preds, truths) -> float:
    """Root mean squared error over paired predictions."""
    preds = np.asarray(preds, dtype=float)
    truths = np.asarray(truths, dtype=float)
    if preds.shape != truths.shape or preds.size == 0:
        raise IntegrityError(f"prediction/truth length mismatch: {preds.shape} vs {truths.shape}")
    d = preds - truths
    return float(np.sqrt(np.mean(d * d)))


def score_term(d: float, under_scale: float = SF_UNDER_SCALE, over_scale: float = SF_OVER_SCALE) -> float:
    """Penalty contribution of one engine with error d = predicted - true."""
    if d < 0:
        return math.exp(-d / under_scale) - 1.0
    return math.exp(d / over_scale) - 1.0


def score_function(preds, truths) -> float:
    """Summed asymmetric penalty over all engines."""
    preds = np.asarray(preds, dtype=float)
    truths = np.asarray(truths, dtype=float)
    if preds.shape != truths.shape or preds.size == 0:
        raise IntegrityError(f"prediction/truth length mismatch: {preds.shape} vs {truths.shape}")
    return float(sum(score_term(d) for d in preds - truths))


@dataclass(frozen=True)
class EngineScore:
    unit_id: int
    true_rul: float
    predicted_rul: float

    @property
    def d(self) -> float:
        return self.predicted_rul - self.true_rul


@dataclass(frozen=True)
class EvalReport:
    """Aggregate and per-engine scores for one dataset run."""

    dataset_id: str
    rmse: float
    sf: float
    per_engine: tuple

    @property
    def n(self) -> int:
        return len(self.per_engine)

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset_id,
            "n": self.n,
            "rmse": self.rmse,
            "sf": self.sf,
            "per_engine": [
                {
                    "unit": row.unit_id,
                    "true_rul": row.true_rul,
                    "predicted_rul": row.predicted_rul,
                    "d": row.d,
                }
                for row in self.per_engine
            ],
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["unit", "true_rul", "predicted_rul", "d"])
            for row in self.per_engine:
                writer.writerow([row.unit_id, row.true_rul, row.predicted_rul, row.d])


def evaluate_predictions(predictions: dict, targets, cap: float = 130.0, dataset_id: str = "FD001") -> EvalReport:
    """Score one prediction per test engine against its true RUL.

    ``predictions`` maps unit_id to the raw estimate; ``targets`` is the
    parsed true-RUL list. Both sides are capped before scoring. A missing
    prediction for any target unit is an integrity error.
    """
    rows = []
    for target in targets:
        if target.unit_id not in predictions:
            raise IntegrityError(f"no prediction for test unit {target.unit_id}")
        pred = min(float(predictions[target.unit_id]), cap)
        true = min(float(target.true_rul_at_cutoff), cap)
        rows.append(EngineScore(unit_id=target.unit_id, true_rul=true, predicted_rul=pred))
    extra = set(predictions) - {t.unit_id for t in targets}
    if extra:
        raise IntegrityError(f"predictions for unknown units {sorted(extra)}")
    preds = [r.predicted_rul for r in rows]
    trues = [r.true_rul for r in rows]
    return EvalReport(
        dataset_id=dataset_id,
        rmse=rmse(preds, trues),
        sf=score_function(preds, trues),
        per_engine=tuple(rows),
    )


def evaluate_dataset(model, engines, targets, standardizer, cap: float = 130.0) -> EvalReport:
    """Score a trained regressor over selected-sensor test engines.

    Each engine gets one prediction from its final available window (shorter
    series are left-padded), standardized with the pooled train-set
    parameters.
    """
    from .cva import apply_standardizer
    from .labeling import trailing_window
    from .lstm import predict

    if model.sequence_length is None:
        raise IntegrityError("model does not carry its training window length")
    predictions = {}
    for series in engines:
        if series.sensors.shape[1] != model.input_dim:
            raise IntegrityError(
                f"unit {series.unit_id}: {series.sensors.shape[1]} channels but "
                f"model expects {model.input_dim}"
            )
        x = apply_standardizer(standardizer, np.asarray(series.sensors, dtype=float).T).T
        window = trailing_window(x, model.sequence_length)
        predictions[series.unit_id] = predict(model, window, cap=cap)
    dataset_id = engines[0].dataset_id if engines else "FD001"
    return evaluate_predictions(predictions, targets, cap=cap, dataset_id=dataset_id)


def format_metrics_row(report: EvalReport, label: str = "ChangePoint-LSTM") -> str:
    """One benchmark-table style line for the current run."""
    return (
        f"{label:<20s} {report.dataset_id:<6s} n={report.n:<4d} "
        f"RMSE={report.rmse:7.2f}  SF={report.sf:10.2f}"
    )
