"""C-MAPSS text-log ingestion and dataset-specific sensor selection.

Input files are whitespace-delimited with 26 positional columns per row:
unit id, cycle, 3 operating settings, 21 sensor channels. No headers.
Trailing whitespace and blank lines are tolerated (the raw distribution
contains trailing spaces).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import IntegrityError, ParseError

DATASETS = ("FD001", "FD002", "FD003", "FD004")

N_OP_SETTINGS = 3
N_SENSORS = 21
N_COLUMNS = 2 + N_OP_SETTINGS + N_SENSORS

# 1-based sensor indices dropped per dataset: flat/constant channels for the
# single-condition datasets, erratic range-bound channels for the
# multi-condition ones. Override via ``select_sensors(excluded=...)``.
EXCLUDED_SENSORS = {
    "FD001": (1, 5, 6, 10, 16, 18, 19),
    "FD002": (10, 13, 16, 18, 19),
    "FD003": (1, 5, 6, 10, 16, 18, 19),
    "FD004": (10, 13, 16, 18, 19),
}


def _check_dataset_id(dataset_id: str) -> str:
    if dataset_id not in DATASETS:
        raise IntegrityError(f"unknown dataset id {dataset_id!r}, expected one of {DATASETS}")
    return dataset_id


@dataclass(frozen=True)
class EngineSeries:
    """One engine's cycle-indexed operating settings and sensor channels.

    ``cycles`` is the contiguous range 1..k_max. ``sensors`` is row-per-cycle;
    it has 21 channels as parsed and ``m`` kept channels after selection.
    """

    dataset_id: str
    unit_id: int
    cycles: np.ndarray
    op_settings: np.ndarray
    sensors: np.ndarray

    @property
    def k_max(self) -> int:
        return int(self.cycles[-1])

    @property
    def n_channels(self) -> int:
        return self.sensors.shape[1]


@dataclass(frozen=True)
class SensorSelection:
    """Kept 1-based sensor indices for a dataset."""

    dataset_id: str
    kept_indices: tuple

    @property
    def m(self) -> int:
        return len(self.kept_indices)

    @property
    def column_indices(self) -> np.ndarray:
        """0-based positions of the kept channels inside a 21-wide sensor row."""
        return np.asarray(self.kept_indices, dtype=int) - 1


@dataclass(frozen=True)
class RulTarget:
    """True remaining life (cycles) of one test engine at its data cutoff."""

    dataset_id: str
    unit_id: int
    true_rul_at_cutoff: int


def parse_cmapss_file(text: str, dataset_id: str = "FD001") -> list[EngineSeries]:
    """Parse a train/test log into per-engine series, grouped and validated.

    Raises ParseError with the offending row number for malformed rows, and
    IntegrityError naming the unit when its cycles are not the contiguous
    range 1..k_max.
    """
    _check_dataset_id(dataset_id)
    units: dict[int, list] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) != N_COLUMNS:
            raise ParseError(
                f"row {lineno}: expected {N_COLUMNS} columns, got {len(fields)}"
            )
        try:
            values = [float(v) for v in fields]
        except ValueError as exc:
            raise ParseError(f"row {lineno}: non-numeric field ({exc})") from None
        unit = int(values[0])
        if unit <= 0 or values[0] != unit:
            raise ParseError(f"row {lineno}: unit id must be a positive integer")
        units.setdefault(unit, []).append(values[1:])

    engines = []
    for unit in sorted(units):
        rows = np.asarray(units[unit], dtype=float)
        order = np.argsort(rows[:, 0], kind="stable")
        rows = rows[order]
        cycles = rows[:, 0]
        if np.any(cycles != np.round(cycles)):
            raise IntegrityError(f"unit {unit}: non-integer cycle index")
        cycles = cycles.astype(int)
        if cycles[0] != 1 or np.any(np.diff(cycles) != 1):
            raise IntegrityError(
                f"unit {unit}: cycles must form the contiguous range 1..k_max"
            )
        engines.append(
            EngineSeries(
                dataset_id=dataset_id,
                unit_id=unit,
                cycles=cycles,
                op_settings=rows[:, 1 : 1 + N_OP_SETTINGS],
                sensors=rows[:, 1 + N_OP_SETTINGS :],
            )
        )
    return engines


def format_engine_rows(series: EngineSeries) -> str:
    """Serialize a series back to the 26-column text layout (round-trippable)."""
    lines = []
    for i, cycle in enumerate(series.cycles):
        fields = [str(series.unit_id), str(int(cycle))]
        fields += [repr(float(v)) for v in series.op_settings[i]]
        fields += [repr(float(v)) for v in series.sensors[i]]
        lines.append(" ".join(fields))
    return "\n".join(lines) + "\n"


def select_sensors(dataset_id: str, excluded=None) -> SensorSelection:
    """Return the kept-channel table for a dataset.

    ``excluded`` overrides the built-in exclusion list (1-based indices).
    """
    _check_dataset_id(dataset_id)
    if excluded is None:
        excluded = EXCLUDED_SENSORS[dataset_id]
    excluded = set(int(i) for i in excluded)
    if not excluded <= set(range(1, N_SENSORS + 1)):
        raise IntegrityError(f"excluded sensor indices out of range 1..{N_SENSORS}: {sorted(excluded)}")
    kept = tuple(i for i in range(1, N_SENSORS + 1) if i not in excluded)
    return SensorSelection(dataset_id=dataset_id, kept_indices=kept)


def apply_selection(series: EngineSeries, selection: SensorSelection) -> EngineSeries:
    """Drop excluded channels; the result has ``selection.m`` sensor columns."""
    if series.n_channels != N_SENSORS:
        raise IntegrityError(
            f"unit {series.unit_id}: expected {N_SENSORS} channels before selection, "
            f"got {series.n_channels}"
        )
    return EngineSeries(
        dataset_id=series.dataset_id,
        unit_id=series.unit_id,
        cycles=series.cycles,
        op_settings=series.op_settings,
        sensors=series.sensors[:, selection.column_indices],
    )


def load_rul_targets(text: str, dataset_id: str = "FD001", expected_count: int | None = None) -> list[RulTarget]:
    """Parse the per-engine true-RUL file; line i maps to test unit i."""
    _check_dataset_id(dataset_id)
    targets = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        try:
            value = float(stripped)
        except ValueError:
            raise ParseError(f"row {lineno}: non-numeric RUL value {stripped!r}") from None
        if value != int(value):
            raise IntegrityError(f"row {lineno}: RUL must be an integer, got {stripped}")
        value = int(value)
        if value < 0:
            raise IntegrityError(f"row {lineno}: RUL must be nonnegative, got {value}")
        targets.append(
            RulTarget(dataset_id=dataset_id, unit_id=len(targets) + 1, true_rul_at_cutoff=value)
        )
    if expected_count is not None and len(targets) != expected_count:
        raise IntegrityError(
            f"RUL file has {len(targets)} entries but {expected_count} test engines exist"
        )
    return targets


def write_selected_csv(engines, selection: SensorSelection, path) -> None:
    """Export (unit, cycle, kept sensor columns) as a normalized CSV."""
    header = ["unit", "cycle"] + [f"sensor_{i}" for i in selection.kept_indices]
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for series in engines:
            sel = series
            if series.n_channels == N_SENSORS:
                sel = apply_selection(series, selection)
            for i, cycle in enumerate(sel.cycles):
                row = [str(sel.unit_id), str(int(cycle))]
                row += [repr(float(v)) for v in sel.sensors[i]]
                fh.write(",".join(row) + "\n")


def train_file(data_dir, dataset_id: str) -> str:
    return os.path.join(data_dir, f"train_{dataset_id}.txt")


def test_file(data_dir, dataset_id: str) -> str:
    return os.path.join(data_dir, f"test_{dataset_id}.txt")


def rul_file(data_dir, dataset_id: str) -> str:
    return os.path.join(data_dir, f"RUL_{dataset_id}.txt")


def load_dataset(data_dir, dataset_id: str):
    """Load (train engines, test engines, RUL targets) for one dataset."""
    with open(train_file(data_dir, dataset_id)) as fh:
        train = parse_cmapss_file(fh.read(), dataset_id)
    with open(test_file(data_dir, dataset_id)) as fh:
        test = parse_cmapss_file(fh.read(), dataset_id)
    with open(rul_file(data_dir, dataset_id)) as fh:
        targets = load_rul_targets(fh.read(), dataset_id, expected_count=len(test))
    return train, test, targets
