"""Per-cycle streaming monitor: breach persistence and online RUL estimates.

Input is line-delimited JSON records {"unit": int, "cycle": int,
"sensors": [...]} with either the full 21 raw channels or the already
selected subset. Output is one JSON event per line: a per-cycle status
record, a change-point event once a statistic has breached its control
limit for strictly more consecutive cycles than the device's recorded
persistence, and an RUL estimate per cycle after that.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .cmapss import N_SENSORS
from .errors import IntegrityError
from .lstm import LstmRegressor, load_checkpoint, predict
from .cva import Standardizer, project
from .labeling import trailing_window
from .monitoring import MonitorModel

STATUS_NORMAL = "normal"
STATUS_TRANSITION = "transition"
STATUS_DEGRADING = "degrading"


@dataclass
class DeviceStreamState:
    """Mutable per-device stream bookkeeping; single-owner, not thread-safe."""

    unit_id: int
    monitor: MonitorModel
    recent: list = field(default_factory=list)  # standardized vectors, newest last
    window: list = field(default_factory=list)  # raw selected rows for RUL windows
    run_t2: int = 0
    run_q: int = 0
    status: str = STATUS_NORMAL
    k_cp: int | None = None
    last_cycle: int = 0


class StreamMonitor:
    """Routes cycle records to per-device state and emits events."""

    def __init__(
        self,
        monitors: dict,
        kept_indices,
        regressor: LstmRegressor | None = None,
        pooled: Standardizer | None = None,
        rul_cap: float = 130.0,
        max_window: int | None = None,
    ):
        self.monitors = monitors
        self.columns = np.asarray(kept_indices, dtype=int) - 1
        self.m = len(self.columns)
        self.regressor = regressor
        self.pooled = pooled
        self.rul_cap = rul_cap
        self.max_window = max_window or (regressor.sequence_length if regressor else 1)
        self.states: dict = {}

    def _reject(self, reason: str, record=None) -> dict:
        event = {"type": "rejected", "reason": reason}
        if isinstance(record, dict):
            for key in ("unit", "cycle"):
                if key in record:
                    event[key] = record[key]
        return event

    def process_line(self, line: str):
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            return [self._reject(f"invalid JSON: {exc}")]
        return self.process_record(record)

    def process_record(self, record: dict):
        if not isinstance(record, dict) or not {"unit", "cycle", "sensors"} <= set(record):
            return [self._reject("record must carry unit, cycle, and sensors", record)]
        unit = record["unit"]
        if unit not in self.monitors:
            return [self._reject(f"unknown unit {unit}", record)]
        sensors = np.asarray(record["sensors"], dtype=float)
        if sensors.ndim != 1 or sensors.shape[0] not in (N_SENSORS, self.m):
            return [
                self._reject(
                    f"expected {N_SENSORS} raw or {self.m} selected channels, "
                    f"got {sensors.shape}",
                    record,
                )
            ]
        if sensors.shape[0] == N_SENSORS:
            sensors = sensors[self.columns]

        state = self.states.get(unit)
        if state is None:
            state = DeviceStreamState(unit_id=unit, monitor=self.monitors[unit])
            self.states[unit] = state
        cycle = int(record["cycle"])
        if cycle <= state.last_cycle:
            return [self._reject(f"cycle {cycle} not after {state.last_cycle}", record)]
        if state.last_cycle and cycle != state.last_cycle + 1:
            return [self._reject(f"cycle gap: expected {state.last_cycle + 1}, got {cycle}", record)]
        state.last_cycle = cycle

        return self._step(state, cycle, sensors)

    def _step(self, state: DeviceStreamState, cycle: int, sensors: np.ndarray):
        monitor = state.monitor
        std = monitor.cva.standardizer
        standardized = (sensors - std.mean) / std.std

        events = []
        t2 = q = None
        p = monitor.cva.p
        if len(state.recent) >= p:
            # Past vector stacks newest lag first, excluding the current cycle.
            column = np.concatenate([state.recent[-lag] for lag in range(1, p + 1)])
            z, e = project(monitor.cva, column)
            t2 = float(np.sum(z * z))
            q = float(np.sum(e * e))
            state.run_t2 = state.run_t2 + 1 if t2 >= monitor.cl_t2 else 0
            state.run_q = state.run_q + 1 if q >= monitor.cl_q else 0
            longest = max(state.run_t2, state.run_q)
            if longest > 0 and state.status == STATUS_NORMAL:
                state.status = STATUS_TRANSITION
            if longest > monitor.persistence and state.status != STATUS_DEGRADING:
                state.status = STATUS_DEGRADING
                state.k_cp = cycle - longest + 1
                events.append(
                    {
                        "type": "change_point",
                        "unit": state.unit_id,
                        "cycle": cycle,
                        "k_cp": state.k_cp,
                        "statistic": "t2" if state.run_t2 >= state.run_q else "q",
                    }
                )
        state.recent.append(standardized)
        if len(state.recent) > p:
            state.recent.pop(0)
        state.window.append(sensors)
        if len(state.window) > self.max_window:
            state.window.pop(0)

        status_event = {
            "type": "status",
            "unit": state.unit_id,
            "cycle": cycle,
            "t2": t2,
            "q": q,
            "status": state.status,
        }
        if state.status == STATUS_DEGRADING and self.regressor is not None:
            x = apply_pooled(self.pooled, np.asarray(state.window))
            window = trailing_window(x, self.regressor.sequence_length)
            status_event["rul"] = predict(self.regressor, window, cap=self.rul_cap)
        events.insert(0, status_event)
        return events


def apply_pooled(pooled: Standardizer | None, rows: np.ndarray) -> np.ndarray:
    if pooled is None:
        return rows
    return (rows - pooled.mean) / pooled.std


def load_monitors(monitors_dir):
    """Load the per-unit monitor artifacts written by the detect command."""
    manifest_path = os.path.join(monitors_dir, "manifest.json")
    if not os.path.exists(manifest_path):
        raise IntegrityError(f"no monitor manifest at {manifest_path}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    monitors = {}
    for unit in manifest["units"]:
        path = os.path.join(monitors_dir, f"unit_{unit:04d}.json")
        with open(path) as fh:
            monitors[unit] = MonitorModel.from_dict(json.load(fh))
    return monitors, manifest


def run_monitor(
    monitors_dir,
    input_lines,
    out_fh,
    checkpoint_path=None,
    rul_cap: float = 130.0,
):
    """Stream records through the monitor, writing one JSON event per line."""
    monitors, manifest = load_monitors(monitors_dir)
    regressor = pooled = None
    if checkpoint_path is not None:
        regressor, meta = load_checkpoint(checkpoint_path)
        pooled = Standardizer(
            mean=np.asarray(meta["pooled_mean"], dtype=float),
            std=np.asarray(meta["pooled_std"], dtype=float),
        )
    stream = StreamMonitor(
        monitors,
        manifest["kept_indices"],
        regressor=regressor,
        pooled=pooled,
        rul_cap=rul_cap,
    )
    n_events = 0
    for line in input_lines:
        if not line.strip():
            continue
        for event in stream.process_line(line):
            out_fh.write(json.dumps(event, sort_keys=True) + "\n")
            n_events += 1
    return n_events
