"""End-to-end orchestration: detect, train, evaluate, sweep, and stream monitor.

Offline commands read C-MAPSS-format files from config.data_dir and write
reports and artifacts under config.out_dir. All outputs are deterministic
for a fixed config and seed: rows are sorted by unit and no timestamps are
embedded.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import cmapss
from .config import PipelineConfig
from .cva import Standardizer, apply_standardizer
from .errors import (
    ConfigError,
    FallbackRequired,
    InsufficientDataError,
    IntegrityError,
)
from .labeling import (
    WindowedDataset,
    piecewise_rul_labels,
    pooled_standardizer,
    sliding_windows,
    trailing_window,
)
from .lstm import TrainConfig, load_checkpoint, predict, save_checkpoint, train
from .metrics import EvalReport, evaluate_predictions, format_metrics_row
from .monitoring import (
    MonitorConfig,
    MonitorModel,
    fit_device_monitor,
    statistic_trace,
)

log = logging.getLogger(__name__)

REPORT_COLUMNS = (
    "dataset",
    "unit",
    "k_max",
    "k_t2_cp",
    "k_q_cp",
    "k_cp",
    "method",
    "lambda",
    "cl_t2",
    "cl_q",
)


def monitor_config(config: PipelineConfig) -> MonitorConfig:
    return MonitorConfig(
        p=config.p,
        f=config.f,
        r=config.r,
        alpha=config.alpha,
        normal_window=config.normal_window,
        validation_window=config.validation_window,
        min_lifespan=config.min_lifespan,
        breach_fraction_threshold=config.breach_fraction_threshold,
    )


@dataclass(frozen=True)
class DeviceOutcome:
    """One engine's detection outcome, monitor included when fitted."""

    unit_id: int
    k_max: int
    k_t2_cp: int | None
    k_q_cp: int | None
    k_cp: int | None
    method: str
    persistence: int | None
    cl_t2: float | None
    cl_q: float | None
    flagged: bool
    monitor: MonitorModel | None

    def record(self, dataset_id: str) -> dict:
        return {
            "dataset": dataset_id,
            "unit": self.unit_id,
            "k_max": self.k_max,
            "k_t2_cp": self.k_t2_cp,
            "k_q_cp": self.k_q_cp,
            "k_cp": self.k_cp,
            "method": self.method,
            "lambda": self.persistence,
            "cl_t2": self.cl_t2,
            "cl_q": self.cl_q,
        }


def detect_device(series, mon_cfg: MonitorConfig) -> DeviceOutcome:
    """Fit one engine's monitor; map short/unmonitorable engines to fallback."""
    try:
        monitor, result = fit_device_monitor(series, mon_cfg)
    except (FallbackRequired, InsufficientDataError):
        return DeviceOutcome(
            unit_id=series.unit_id,
            k_max=series.k_max,
            k_t2_cp=None,
            k_q_cp=None,
            k_cp=None,
            method="fallback_cap",
            persistence=None,
            cl_t2=None,
            cl_q=None,
            flagged=False,
            monitor=None,
        )
    return DeviceOutcome(
        unit_id=series.unit_id,
        k_max=series.k_max,
        k_t2_cp=result.k_t2_cp,
        k_q_cp=result.k_q_cp,
        k_cp=result.k_cp,
        method=result.method,
        persistence=monitor.persistence,
        cl_t2=monitor.cl_t2,
        cl_q=monitor.cl_q,
        flagged=result.flagged,
        monitor=monitor,
    )


def _subset(engines, subset: int | None):
    return engines[:subset] if subset is not None else engines


def run_detect(config: PipelineConfig, engines=None, write: bool = True):
    """Per-engine change-point detection over the train set.

    Returns (outcomes sorted by unit, summary dict). With write=True, emits
    change_points.{json,csv}, per-unit monitor artifacts, and optionally
    statistic traces under config.out_dir.
    """
    config.validate()
    selection = cmapss.select_sensors(config.dataset_id)
    if engines is None:
        with open(cmapss.train_file(config.data_dir, config.dataset_id)) as fh:
            engines = cmapss.parse_cmapss_file(fh.read(), config.dataset_id)
    engines = _subset(sorted(engines, key=lambda s: s.unit_id), config.subset)
    selected = [
        cmapss.apply_selection(s, selection) if s.n_channels == cmapss.N_SENSORS else s
        for s in engines
    ]
    mon_cfg = monitor_config(config)

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            outcomes = list(pool.map(lambda s: detect_device(s, mon_cfg), selected))
    else:
        outcomes = [detect_device(s, mon_cfg) for s in selected]

    summary = {
        "dataset": config.dataset_id,
        "n_engines": len(outcomes),
        "n_detected": sum(1 for o in outcomes if o.method == "detected"),
        "n_fallback": sum(1 for o in outcomes if o.method == "fallback_cap"),
        "n_flagged": sum(1 for o in outcomes if o.flagged),
        "min_lifespan": config.min_lifespan,
    }

    if write:
        os.makedirs(config.out_dir, exist_ok=True)
        records = [o.record(config.dataset_id) for o in outcomes]
        with open(os.path.join(config.out_dir, "change_points.json"), "w") as fh:
            json.dump({"summary": summary, "engines": records}, fh, indent=2, sort_keys=True)
        with open(os.path.join(config.out_dir, "change_points.csv"), "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
            writer.writeheader()
            for record in records:
                writer.writerow({k: ("" if record[k] is None else record[k]) for k in REPORT_COLUMNS})
        monitors_dir = os.path.join(config.out_dir, "monitors")
        os.makedirs(monitors_dir, exist_ok=True)
        manifest = {
            "dataset": config.dataset_id,
            "kept_indices": list(selection.kept_indices),
            "units": [o.unit_id for o in outcomes if o.monitor is not None],
        }
        with open(os.path.join(monitors_dir, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
        for outcome in outcomes:
            if outcome.monitor is None:
                continue
            path = os.path.join(monitors_dir, f"unit_{outcome.unit_id:04d}.json")
            with open(path, "w") as fh:
                json.dump(outcome.monitor.to_dict(), fh, sort_keys=True)
        if config.export_traces:
            _write_traces(config, outcomes, selected)

    log.info(
        "%s: %d engines, %d detected, %d fallback, %d flagged",
        config.dataset_id,
        summary["n_engines"],
        summary["n_detected"],
        summary["n_fallback"],
        summary["n_flagged"],
    )
    return outcomes, summary


def _write_traces(config, outcomes, selected):
    traces_dir = os.path.join(config.out_dir, "traces")
    os.makedirs(traces_dir, exist_ok=True)
    by_unit = {s.unit_id: s for s in selected}
    for outcome in outcomes:
        if outcome.monitor is None:
            continue
        stats = statistic_trace(outcome.monitor, by_unit[outcome.unit_id].sensors)
        path = os.path.join(traces_dir, f"unit_{outcome.unit_id:04d}.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["cycle", "t2", "q", "cl_t2", "cl_q"])
            for i, cycle in enumerate(stats.cycles):
                writer.writerow(
                    [cycle, stats.t2[i], stats.q[i], outcome.cl_t2, outcome.cl_q]
                )


def _pre_cp_reference(k_max: int, k_cp: int | None, config: PipelineConfig) -> int:
    """Cutoff cycle whose preceding data counts as normal operation."""
    if k_cp is not None:
        return max(k_cp - 1, 2)
    implied = k_max - config.fallback_cap
    return min(k_max, max(implied, config.normal_window))


def build_training_data(config: PipelineConfig, engines, outcomes):
    """Pooled pre-change-point standardizer plus stacked training windows."""
    cp_by_unit = {o.unit_id: o for o in outcomes}
    segments = []
    for series in engines:
        outcome = cp_by_unit[series.unit_id]
        ref = _pre_cp_reference(series.k_max, outcome.k_cp, config)
        segments.append(np.asarray(series.sensors, dtype=float)[:ref])
    pooled = pooled_standardizer(segments)

    parts = []
    skipped = []
    for series in engines:
        outcome = cp_by_unit[series.unit_id]
        spec = piecewise_rul_labels(
            series.k_max,
            outcome.k_cp if outcome.method == "detected" else None,
            fallback_cap=config.fallback_cap,
            unit_id=series.unit_id,
        )
        x = apply_standardizer(pooled, np.asarray(series.sensors, dtype=float).T).T
        try:
            parts.append(
                sliding_windows(
                    x, spec.labels, config.sequence_length, unit_id=series.unit_id
                )
            )
        except InsufficientDataError:
            skipped.append(series.unit_id)
    if skipped:
        log.warning(
            "skipped %d engine(s) shorter than one window: %s", len(skipped), skipped
        )
    return pooled, WindowedDataset.concatenate(parts)


def run_train(config: PipelineConfig, engines=None, outcomes=None, write: bool = True):
    """Train the windowed regressor on change-point-informed labels.

    Reuses an existing change-point report under out_dir when present,
    otherwise runs detection inline. Returns (model, history, meta).
    """
    config.validate()
    selection = cmapss.select_sensors(config.dataset_id)
    if engines is None:
        with open(cmapss.train_file(config.data_dir, config.dataset_id)) as fh:
            engines = cmapss.parse_cmapss_file(fh.read(), config.dataset_id)
    engines = _subset(sorted(engines, key=lambda s: s.unit_id), config.subset)
    selected = [
        cmapss.apply_selection(s, selection) if s.n_channels == cmapss.N_SENSORS else s
        for s in engines
    ]
    if outcomes is None:
        outcomes = _load_or_detect(config, selected)

    pooled, windowed = build_training_data(config, selected, outcomes)
    train_cfg = TrainConfig(
        sequence_length=config.sequence_length,
        hidden_sizes=tuple(config.hidden_sizes),
        dropout_ratios=tuple(config.dropout_ratios),
        learning_rate=config.learning_rate,
        epochs=config.epochs,
        batch_size=config.batch_size,
        optimizer=config.optimizer,
        seed=config.seed,
        grad_clip=config.grad_clip,
        label_cap=float(config.fallback_cap),
    )
    model, history = train(windowed, train_cfg)
    meta = {
        "dataset": config.dataset_id,
        "kept_indices": list(selection.kept_indices),
        "pooled_mean": pooled.mean.tolist(),
        "pooled_std": pooled.std.tolist(),
        "n_windows": len(windowed),
        "seed": config.seed,
    }
    if write:
        os.makedirs(config.out_dir, exist_ok=True)
        save_checkpoint(model, os.path.join(config.out_dir, "checkpoint.npz"), meta=meta)
        with open(os.path.join(config.out_dir, "history.json"), "w") as fh:
            json.dump(
                {"epoch_mse": history, "config": config.to_dict()},
                fh,
                indent=2,
                sort_keys=True,
            )
        log.info("checkpoint written to %s", os.path.join(config.out_dir, "checkpoint.npz"))
    return model, history, meta


def _load_or_detect(config: PipelineConfig, selected_engines):
    report_path = os.path.join(config.out_dir, "change_points.json")
    if os.path.exists(report_path):
        with open(report_path) as fh:
            payload = json.load(fh)
        by_unit = {}
        for record in payload["engines"]:
            by_unit[record["unit"]] = DeviceOutcome(
                unit_id=record["unit"],
                k_max=record["k_max"],
                k_t2_cp=record["k_t2_cp"],
                k_q_cp=record["k_q_cp"],
                k_cp=record["k_cp"],
                method=record["method"],
                persistence=record["lambda"],
                cl_t2=record["cl_t2"],
                cl_q=record["cl_q"],
                flagged=False,
                monitor=None,
            )
        missing = [s.unit_id for s in selected_engines if s.unit_id not in by_unit]
        if missing:
            raise IntegrityError(
                f"change-point report at {report_path} lacks units {missing}"
            )
        return [by_unit[s.unit_id] for s in selected_engines]
    outcomes, _ = run_detect(config, engines=selected_engines, write=True)
    return outcomes


def run_evaluate(
    config: PipelineConfig,
    checkpoint_path=None,
    write: bool = True,
    injected_predictions: dict | None = None,
):
    """Score a checkpoint over the test set; returns the EvalReport.

    ``injected_predictions`` (unit -> estimate) bypasses the model entirely
    and scores the given values; useful for oracle smoke checks of the
    scoring path.
    """
    config.validate()
    if injected_predictions is not None:
        with open(cmapss.test_file(config.data_dir, config.dataset_id)) as fh:
            test_engines = cmapss.parse_cmapss_file(fh.read(), config.dataset_id)
        with open(cmapss.rul_file(config.data_dir, config.dataset_id)) as fh:
            targets = cmapss.load_rul_targets(
                fh.read(), config.dataset_id, expected_count=len(test_engines)
            )
        test_engines = _subset(sorted(test_engines, key=lambda s: s.unit_id), config.subset)
        unit_ids = {s.unit_id for s in test_engines}
        targets = [t for t in targets if t.unit_id in unit_ids]
        report = evaluate_predictions(
            injected_predictions,
            targets,
            cap=float(config.fallback_cap),
            dataset_id=config.dataset_id,
        )
        print(format_metrics_row(report, label="injected-oracle"))
        return report
    if checkpoint_path is None:
        checkpoint_path = os.path.join(config.out_dir, "checkpoint.npz")
    model, meta = load_checkpoint(checkpoint_path)
    kept = meta.get("kept_indices")
    if kept is None or len(kept) != model.input_dim:
        raise IntegrityError("checkpoint metadata does not match its architecture")
    pooled = Standardizer(
        mean=np.asarray(meta["pooled_mean"], dtype=float),
        std=np.asarray(meta["pooled_std"], dtype=float),
    )
    selection = cmapss.SensorSelection(
        dataset_id=config.dataset_id, kept_indices=tuple(kept)
    )
    with open(cmapss.test_file(config.data_dir, config.dataset_id)) as fh:
        test_engines = cmapss.parse_cmapss_file(fh.read(), config.dataset_id)
    with open(cmapss.rul_file(config.data_dir, config.dataset_id)) as fh:
        targets = cmapss.load_rul_targets(
            fh.read(), config.dataset_id, expected_count=len(test_engines)
        )
    test_engines = _subset(sorted(test_engines, key=lambda s: s.unit_id), config.subset)
    unit_ids = {s.unit_id for s in test_engines}
    targets = [t for t in targets if t.unit_id in unit_ids]

    predictions = {}
    for series in test_engines:
        sel = cmapss.apply_selection(series, selection)
        if sel.sensors.shape[1] != model.input_dim:
            raise IntegrityError(
                f"unit {series.unit_id}: {sel.sensors.shape[1]} channels but "
                f"checkpoint expects {model.input_dim}"
            )
        x = apply_standardizer(pooled, np.asarray(sel.sensors, dtype=float).T).T
        window = trailing_window(x, model.sequence_length)
        predictions[series.unit_id] = predict(model, window, cap=float(config.fallback_cap))
    report = evaluate_predictions(
        predictions, targets, cap=float(config.fallback_cap), dataset_id=config.dataset_id
    )
    if write:
        os.makedirs(config.out_dir, exist_ok=True)
        report.write_json(os.path.join(config.out_dir, "evaluation.json"))
        report.write_csv(os.path.join(config.out_dir, "evaluation.csv"))
    print(format_metrics_row(report))
    return report


def constant_cap_report(config: PipelineConfig) -> EvalReport:
    """Baseline: predict the fallback cap for every test engine."""
    with open(cmapss.test_file(config.data_dir, config.dataset_id)) as fh:
        test_engines = cmapss.parse_cmapss_file(fh.read(), config.dataset_id)
    with open(cmapss.rul_file(config.data_dir, config.dataset_id)) as fh:
        targets = cmapss.load_rul_targets(
            fh.read(), config.dataset_id, expected_count=len(test_engines)
        )
    test_engines = _subset(sorted(test_engines, key=lambda s: s.unit_id), config.subset)
    unit_ids = {s.unit_id for s in test_engines}
    targets = [t for t in targets if t.unit_id in unit_ids]
    predictions = {u: float(config.fallback_cap) for u in unit_ids}
    return evaluate_predictions(
        predictions, targets, cap=float(config.fallback_cap), dataset_id=config.dataset_id
    )


def run_sweep(config: PipelineConfig, candidates, write: bool = True):
    """Full pipeline per candidate minimum lifespan; short candidates or runs
    with no detected change point at all are recorded as not-applicable."""
    config.validate()
    if not candidates:
        raise ConfigError("sweep needs at least one candidate minimum lifespan")
    rows = []
    min_monitorable = config.normal_window + config.validation_window + config.p + 1
    for candidate in candidates:
        sub_dir = os.path.join(config.out_dir, f"sweep_{candidate}")
        sub_cfg = replace(config, min_lifespan=int(candidate), out_dir=sub_dir)
        if candidate < min_monitorable:
            rows.append(
                {
                    "min_lifespan": candidate,
                    "applicable": False,
                    "reason": f"candidate below first monitorable lifespan {min_monitorable}",
                }
            )
            continue
        outcomes, summary = run_detect(sub_cfg, write=write)
        if summary["n_detected"] == 0:
            rows.append(
                {
                    "min_lifespan": candidate,
                    "applicable": False,
                    "reason": "no change point detected for any eligible engine",
                }
            )
            continue
        run_train(sub_cfg, outcomes=outcomes, write=True)
        report = run_evaluate(sub_cfg, write=write)
        rows.append(
            {
                "min_lifespan": candidate,
                "applicable": True,
                "n_detected": summary["n_detected"],
                "n_fallback": summary["n_fallback"],
                "rmse": report.rmse,
                "sf": report.sf,
            }
        )
    if write:
        os.makedirs(config.out_dir, exist_ok=True)
        with open(os.path.join(config.out_dir, "sweep.json"), "w") as fh:
            json.dump(rows, fh, indent=2, sort_keys=True)
        with open(os.path.join(config.out_dir, "sweep.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["min_lifespan", "rmse", "sf"])
            for row in rows:
                if row["applicable"]:
                    writer.writerow([row["min_lifespan"], row["rmse"], row["sf"]])
                else:
                    writer.writerow([row["min_lifespan"], "NA", "NA"])
    return rows
