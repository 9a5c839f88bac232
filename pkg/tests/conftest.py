"""Shared fixtures: synthetic series, small tasks, offline backends."""

from __future__ import annotations

import numpy as np
import pytest

from tsrationale.backend import BackendConfig, MockBackend
from tsrationale.data import (
    MEAN_COMPARISON_BINARY,
    THRESHOLD_DELTA_3CLASS,
    Sample,
    SeriesTable,
    TaskSpec,
    window_samples,
)


def hourly_timestamps(n: int, start: str = "2019-01-01T00:00") -> np.ndarray:
    base = np.datetime64(start, "ns")
    return base + np.arange(n) * np.timedelta64(3600, "s")


def make_series(n_rows: int, n_vars: int, seed: int = 0,
                names: tuple[str, ...] | None = None) -> SeriesTable:
    rng = np.random.default_rng(seed)
    values = rng.normal(size=(n_rows, n_vars)).cumsum(axis=0) + 50.0
    names = names or tuple(f"v{i}" for i in range(n_vars))
    return SeriesTable(
        variable_names=names,
        timestamps=hourly_timestamps(n_rows),
        values=values,
    )


def make_sample(sample_id: str, window: np.ndarray,
                names: tuple[str, ...] | None = None,
                label: int | None = None) -> Sample:
    names = names or tuple(f"v{i}" for i in range(window.shape[1]))
    return Sample(
        id=sample_id,
        window=np.asarray(window, dtype=np.float64),
        variable_names=names,
        timestamps=hourly_timestamps(window.shape[0]),
        label=label,
    )


@pytest.fixture
def tiny_task() -> TaskSpec:
    """Small 3-class task (absolute +/-2 band) for fast end-to-end tests."""
    return TaskSpec(
        name="tiny",
        history_len=6,
        horizon_len=1,
        target_variable="t0",
        label_rule=THRESHOLD_DELTA_3CLASS,
        class_meanings=("decrease by 2", "remain stable", "increase by 2"),
        delta=2.0,
        delta_is_relative=False,
        domain="traffic",
        history_phrase="6-hour",
        future_phrase="hour",
        comparison_phrase="compared to the last hour",
        reasoning_task_phrase="increase by 2, decrease by 2, or remain stable",
    )


@pytest.fixture
def binary_task() -> TaskSpec:
    return TaskSpec(
        name="tiny-binary",
        history_len=6,
        horizon_len=3,
        target_variable="t0",
        label_rule=MEAN_COMPARISON_BINARY,
        class_meanings=("not surpass the past average", "surpass the past average"),
        domain="wind power",
        history_phrase="6-hour",
        future_phrase="3 hours",
        comparison_phrase="compared to the average of the past 6 hours",
        reasoning_task_phrase="be higher than the average of the past 6 hours",
    )


@pytest.fixture
def mock_backend(tmp_path) -> MockBackend:
    return MockBackend(BackendConfig(kind="mock", cache_dir=str(tmp_path / "cache")))


@pytest.fixture
def uncached_mock() -> MockBackend:
    return MockBackend(BackendConfig(kind="mock"))


def make_task_samples(task: TaskSpec, count: int, seed: int = 0,
                      n_vars: int = 2) -> list[Sample]:
    """Labeled samples for a task via real windowing over a synthetic series."""
    rows = task.history_len + task.horizon_len + count - 1
    names = ("t0",) + tuple(f"v{i}" for i in range(1, n_vars))
    series = make_series(rows, n_vars, seed=seed, names=names)
    samples = window_samples(series, task, stride=1)
    assert len(samples) >= count
    return samples[:count]
