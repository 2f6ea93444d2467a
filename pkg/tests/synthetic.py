"""Synthetic degradation corpus helpers shared by the test suite.

Engines are low-rank sensor fleets: a few autoregressive latent factors
drive all channels through fixed loadings, with a small independent noise
floor and an i.i.d. two-level operating-regime offset shared across
channels. Degrading engines add a step-plus-ramp drift from the injected
change-point cycle onward, split between the factor space and a couple of
individual channels, so both monitoring statistics react and breach
permanently almost immediately after the change point.
"""

from __future__ import annotations

import numpy as np

from changepoint_rul.cmapss import EngineSeries, N_SENSORS, select_sensors

N_FACTORS = 2
FACTOR_AR = 0.5
CHANNEL_NOISE = 0.5
REGIME_DELTA = 1.0
DRIFT_STEP = 4.0
DRIFT_SLOPE = 0.05
N_LOCAL_FAULTS = 3


def channel_matrix(
    k_max: int,
    k_cp: int | None,
    rng: np.random.Generator,
    n_channels: int = 6,
    regimes: int = 2,
) -> np.ndarray:
    """(k_max, n_channels) matrix; drift starts at cycle k_cp when given."""
    innovations = rng.normal(scale=np.sqrt(1 - FACTOR_AR**2), size=(k_max, N_FACTORS))
    factors = np.empty((k_max, N_FACTORS))
    factors[0] = rng.normal(size=N_FACTORS)
    for t in range(1, k_max):
        factors[t] = FACTOR_AR * factors[t - 1] + innovations[t]
    loadings = rng.uniform(0.5, 1.5, size=(N_FACTORS, n_channels))
    loadings[:, ::2] *= -1.0  # mix signs so channels trend both ways
    x = factors @ loadings + rng.normal(scale=CHANNEL_NOISE, size=(k_max, n_channels))
    if regimes > 1:
        regime = rng.integers(0, regimes, size=k_max).astype(float)
        offsets = REGIME_DELTA * (0.5 + 0.5 * np.arange(n_channels) / n_channels)
        x += regime[:, None] * offsets[None, :]
    if k_cp is not None:
        cycles = np.arange(1, k_max + 1)
        ramp = np.where(cycles >= k_cp, DRIFT_STEP + DRIFT_SLOPE * (cycles - k_cp), 0.0)
        x += ramp[:, None] * loadings[0][None, :] / 3.0  # factor-space shift
        n_local = min(N_LOCAL_FAULTS, n_channels)
        for ch in range(n_local):  # plus channel-local faults off the factor span
            x[:, ch * max(1, n_channels // n_local)] += ramp
    return x


def make_engine_series(
    unit_id: int,
    k_max: int,
    k_cp: int | None,
    seed: int,
    n_channels: int = 6,
    regimes: int = 2,
    dataset_id: str = "FD001",
) -> EngineSeries:
    """Selected-channel series for direct monitoring tests."""
    rng = np.random.default_rng(seed)
    sensors = channel_matrix(k_max, k_cp, rng, n_channels=n_channels, regimes=regimes)
    cycles = np.arange(1, k_max + 1)
    return EngineSeries(
        dataset_id=dataset_id,
        unit_id=unit_id,
        cycles=cycles,
        op_settings=np.zeros((k_max, 3)),
        sensors=sensors,
    )


def raw_sensor_rows(
    k_max: int, k_cp: int | None, rng: np.random.Generator, dataset_id: str = "FD001"
) -> np.ndarray:
    """(k_max, 21) raw rows: signal on the kept channels, constants elsewhere."""
    selection = select_sensors(dataset_id)
    signal = channel_matrix(k_max, k_cp, rng, n_channels=selection.m)
    sensors = np.zeros((k_max, N_SENSORS))
    for pos, col in enumerate(selection.column_indices):
        sensors[:, col] = np.round(100.0 + 10.0 * signal[:, pos], 4)
    excluded = sorted(set(range(N_SENSORS)) - set(selection.column_indices.tolist()))
    for j, col in enumerate(excluded):
        sensors[:, col] = 500.0 + j  # flat uninformative channels
    return sensors


def engine_text(unit_id: int, sensors: np.ndarray, rng: np.random.Generator) -> str:
    k_max = sensors.shape[0]
    settings = np.round(rng.normal(scale=0.001, size=(k_max, 3)), 6)
    lines = []
    for i in range(k_max):
        fields = [str(unit_id), str(i + 1)]
        fields += [f"{v:.6f}" for v in settings[i]]
        fields += [f"{v:.4f}" for v in sensors[i]]
        lines.append(" ".join(fields) + " ")  # raw files carry trailing spaces
    return "\n".join(lines) + "\n"


def make_corpus(
    n_train: int = 20,
    n_test: int = 8,
    seed: int = 0,
    dataset_id: str = "FD001",
    short_every: int = 5,
):
    """Train/test/RUL texts plus ground truth for a small synthetic fleet.

    Returns (train_text, test_text, rul_text, truth) where truth maps train
    unit ids to their injected change points.
    """
    rng = np.random.default_rng(seed)
    truth = {}
    train_parts = []
    for unit in range(1, n_train + 1):
        if short_every and unit % short_every == 0:
            k_max = int(rng.integers(120, 190))
            k_cp = max(k_max - int(rng.integers(90, 120)), 70)
        else:
            k_max = int(rng.integers(210, 330))
            k_cp = int(k_max - rng.integers(60, 110))  # later cp for longer lives
        truth[unit] = k_cp
        sensors = raw_sensor_rows(k_max, k_cp, rng, dataset_id)
        train_parts.append(engine_text(unit, sensors, rng))

    test_parts = []
    rul_lines = []
    for unit in range(1, n_test + 1):
        k_max = int(rng.integers(160, 300))
        k_cp = max(k_max - int(rng.integers(60, 130)), 60)
        true_rul = int(rng.integers(5, 120))
        cutoff = max(k_max - true_rul, 40)
        sensors = raw_sensor_rows(k_max, k_cp, rng, dataset_id)[:cutoff]
        test_parts.append(engine_text(unit, sensors, rng))
        rul_lines.append(str(k_max - cutoff))

    return (
        "".join(train_parts),
        "".join(test_parts),
        "\n".join(rul_lines) + "\n",
        truth,
    )


def write_corpus(data_dir, dataset_id: str = "FD001", **kwargs):
    """Materialize a corpus as C-MAPSS-layout files; returns the truth map."""
    import os

    os.makedirs(data_dir, exist_ok=True)
    train_text, test_text, rul_text, truth = make_corpus(dataset_id=dataset_id, **kwargs)
    with open(os.path.join(data_dir, f"train_{dataset_id}.txt"), "w") as fh:
        fh.write(train_text)
    with open(os.path.join(data_dir, f"test_{dataset_id}.txt"), "w") as fh:
        fh.write(test_text)
    with open(os.path.join(data_dir, f"RUL_{dataset_id}.txt"), "w") as fh:
        fh.write(rul_text)
    return truth
