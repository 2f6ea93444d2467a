"""Piecewise RUL labels, change-point-informed standardization, and windowing.

Matrices in this module are cycle-major: (N, m) with one row per cycle, the
orientation the windowed regressor consumes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .cva import Standardizer, apply_standardizer, fit_standardizer
from .errors import InsufficientDataError, IntegrityError

DEFAULT_RUL_CAP = 130


@dataclass(frozen=True)
class RulLabelSpec:
    """Per-cycle RUL labels: constant at y_max, then linear decay to zero."""

    unit_id: int
    k_max: int
    k_cp: int | None
    y_max: int
    labels: np.ndarray  # index i holds the label of cycle i + 1


def piecewise_rul_labels(
    k_max: int, k_cp: int | None = None, fallback_cap: int = DEFAULT_RUL_CAP, unit_id: int = 0
) -> RulLabelSpec:
    """Build the piecewise label vector for one device.

    With a change point the cap is the remaining life at that point,
    y_max = k_max - k_cp; without one the fixed fallback cap applies.
    """
    if k_max < 1:
        raise IntegrityError(f"lifespan must be >= 1, got {k_max}")
    if k_cp is not None:
        if not 1 <= k_cp < k_max:
            raise IntegrityError(f"change point {k_cp} must lie in 1..{k_max - 1}")
        y_max = k_max - k_cp
    else:
        y_max = fallback_cap
    cycles = np.arange(1, k_max + 1)
    labels = np.minimum(k_max - cycles, y_max)
    return RulLabelSpec(unit_id=unit_id, k_max=k_max, k_cp=k_cp, y_max=int(y_max), labels=labels)


def piecewise_standardize(series: np.ndarray, k_cp_reference: int):
    """Standardize a (N, m) matrix with statistics from its pre-change-point rows.

    Mean and deviation are fit on cycles 1..k_cp_reference only, then applied
    to every cycle, so degradation-era excursions are amplified relative to
    normal-operation spread.

    Returns (standardized matrix, fitted Standardizer).
    """
    series = np.asarray(series, dtype=float)
    if series.ndim != 2:
        raise IntegrityError("expected a (N, m) cycle-major matrix")
    if not 2 <= k_cp_reference <= series.shape[0]:
        raise InsufficientDataError(
            f"reference cutoff {k_cp_reference} must lie in 2..{series.shape[0]}"
        )
    standardizer = fit_standardizer(series[:k_cp_reference].T)
    return apply_standardizer(standardizer, series.T).T, standardizer


def pooled_standardizer(segments) -> Standardizer:
    """Fit one global standardizer over stacked pre-change-point segments.

    ``segments`` is an iterable of (N_j, m) matrices, one per train device.
    """
    stacked = np.vstack([np.asarray(seg, dtype=float) for seg in segments])
    return fit_standardizer(stacked.T)


@dataclass(frozen=True)
class WindowedDataset:
    """Fixed-length training windows with the RUL label at each window's end."""

    windows: np.ndarray  # (n, L, m)
    targets: np.ndarray  # (n,)
    units: np.ndarray  # (n,) provenance
    end_cycles: np.ndarray  # (n,) provenance

    def __len__(self) -> int:
        return len(self.targets)

    @property
    def sequence_length(self) -> int:
        return self.windows.shape[1]

    @property
    def n_channels(self) -> int:
        return self.windows.shape[2]

    @classmethod
    def concatenate(cls, parts) -> "WindowedDataset":
        parts = list(parts)
        if not parts:
            raise InsufficientDataError("no windowed data to concatenate")
        return cls(
            windows=np.concatenate([p.windows for p in parts]),
            targets=np.concatenate([p.targets for p in parts]),
            units=np.concatenate([p.units for p in parts]),
            end_cycles=np.concatenate([p.end_cycles for p in parts]),
        )


def sliding_windows(
    x: np.ndarray, labels: np.ndarray, length: int, step: int = 1, unit_id: int = 0
) -> WindowedDataset:
    """Cut a (N, m) matrix into length-L windows ending at cycles L..N.

    The target of each window is the label at its final cycle. Raises
    InsufficientDataError when the series is shorter than one window; the
    pipeline skips such devices with a warning.
    """
    x = np.asarray(x, dtype=float)
    labels = np.asarray(labels)
    n = x.shape[0]
    if labels.shape[0] != n:
        raise IntegrityError(f"{n} cycles but {labels.shape[0]} labels")
    if length < 1 or step < 1:
        raise IntegrityError("window length and step must be >= 1")
    if n < length:
        raise InsufficientDataError(f"unit {unit_id}: {n} cycles < window length {length}")
    ends = np.arange(length, n + 1, step)
    windows = np.stack([x[e - length : e] for e in ends])
    return WindowedDataset(
        windows=windows,
        targets=labels[ends - 1].astype(float),
        units=np.full(len(ends), unit_id, dtype=int),
        end_cycles=ends.astype(int),
    )


def trailing_window(x: np.ndarray, length: int) -> np.ndarray:
    """Last L cycles of a (N, m) matrix, left-padded by repeating the first
    cycle when the series is shorter than one window."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if n >= length:
        return x[n - length :]
    pad = np.repeat(x[:1], length - n, axis=0)
    return np.vstack([pad, x])


def save_windowed(dataset: WindowedDataset, path, sidecar: dict | None = None) -> None:
    """Persist windows as a binary tensor file with a JSON sidecar."""
    np.savez_compressed(
        path,
        windows=dataset.windows,
        targets=dataset.targets,
        units=dataset.units,
        end_cycles=dataset.end_cycles,
    )
    meta = {
        "version": 1,
        "n_windows": len(dataset),
        "sequence_length": dataset.sequence_length,
        "n_channels": dataset.n_channels,
    }
    if sidecar:
        meta.update(sidecar)
    with open(str(path) + ".json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def load_windowed(path) -> WindowedDataset:
    with np.load(path) as payload:
        return WindowedDataset(
            windows=payload["windows"],
            targets=payload["targets"],
            units=payload["units"],
            end_cycles=payload["end_cycles"],
        )
