"""Ingestion, labeling, windowing, and split behavior."""

from __future__ import annotations

import numpy as np
import pytest

from tsrationale.data import (
    ColumnSchema,
    Sample,
    derive_label,
    label_distribution,
    load_dataset,
    read_samples,
    split,
    window_samples,
    write_samples,
)
from tsrationale.errors import (
    DataParseError,
    InsufficientDataError,
    OrderingError,
    SchemaError,
    TaskError,
)
from tsrationale.tasks import FINANCE, POWER, TRAFFIC

from conftest import make_sample, make_series


def _write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestLoadDataset:
    def test_minimal_well_formed_file(self, tmp_path):
        path = _write(
            tmp_path,
            "ts,a,b\n2020-01-01T00:00,1,4\n2020-01-01T01:00,2,5\n2020-01-01T02:00,3,6\n",
        )
        schema = ColumnSchema("ts", ("a", "b"))
        table = load_dataset(path, schema)
        assert table.num_rows == 3
        assert table.variable_names == ("a", "b")
        assert table.values.shape == (3, 2)
        np.testing.assert_array_equal(table.column("a"), [1.0, 2.0, 3.0])

    def test_rows_sorted_by_timestamp(self, tmp_path):
        path = _write(
            tmp_path,
            "ts,a\n2020-01-01T02:00,3\n2020-01-01T00:00,1\n2020-01-01T01:00,2\n",
        )
        table = load_dataset(path, ColumnSchema("ts", ("a",)))
        np.testing.assert_array_equal(table.column("a"), [1.0, 2.0, 3.0])

    def test_missing_declared_column(self, tmp_path):
        path = _write(tmp_path, "ts,b\n2020-01-01,1\n")
        with pytest.raises(SchemaError, match="'a'"):
            load_dataset(path, ColumnSchema("ts", ("a",)))

    def test_non_numeric_cell_names_row(self, tmp_path):
        path = _write(
            tmp_path, "ts,a\n2020-01-01T00:00,1\n2020-01-01T01:00,oops\n"
        )
        with pytest.raises(DataParseError, match="row 1"):
            load_dataset(path, ColumnSchema("ts", ("a",)))

    def test_duplicate_timestamps_rejected(self, tmp_path):
        path = _write(
            tmp_path, "ts,a\n2020-01-01T00:00,1\n2020-01-01T00:00,2\n"
        )
        with pytest.raises(OrderingError):
            load_dataset(path, ColumnSchema("ts", ("a",)))

    def test_epoch_timestamps(self, tmp_path):
        path = _write(tmp_path, "ts,a\n100,1\n200,2\n")
        table = load_dataset(path, ColumnSchema("ts", ("a",), timestamp_format="epoch"))
        assert table.num_rows == 2

    def test_missing_file(self, tmp_path):
        with pytest.raises(SchemaError, match="not found"):
            load_dataset(tmp_path / "nope.csv", ColumnSchema("ts", ("a",)))


def _window_with_target(last: float, nxt: float, task, history_len=None, names=None):
    """History/horizon pair whose target column ends at `last` then `nxt`."""
    h = history_len or task.history_len
    names = names or (task.target_variable, "other")
    history = np.full((h, len(names)), 5.0)
    history[-1, 0] = last
    horizon = np.full((task.horizon_len, len(names)), 5.0)
    horizon[-1, 0] = nxt
    return history, horizon, names


class TestDeriveLabel:
    def test_finance_rise_over_one_percent(self):
        history, horizon, names = _window_with_target(100.0, 102.0, FINANCE)
        assert derive_label(history, horizon, FINANCE, names) == 2

    def test_finance_boundary_is_stable(self):
        history, horizon, names = _window_with_target(100.0, 101.0, FINANCE)
        assert derive_label(history, horizon, FINANCE, names) == 1
        history, horizon, names = _window_with_target(100.0, 99.0, FINANCE)
        assert derive_label(history, horizon, FINANCE, names) == 1

    def test_finance_drop(self):
        history, horizon, names = _window_with_target(100.0, 98.9, FINANCE)
        assert derive_label(history, horizon, FINANCE, names) == 0

    def test_traffic_zero_delta_stable(self):
        history, horizon, names = _window_with_target(10.0, 10.0, TRAFFIC)
        assert derive_label(history, horizon, TRAFFIC, names) == 1

    def test_traffic_band_edges(self):
        for nxt, expected in ((12.0, 1), (12.01, 2), (8.0, 1), (7.99, 0)):
            history, horizon, names = _window_with_target(10.0, nxt, TRAFFIC)
            assert derive_label(history, horizon, TRAFFIC, names) == expected

    def test_power_equal_means_is_zero(self):
        names = (POWER.target_variable, "w")
        history = np.full((POWER.history_len, 2), 5.0)
        horizon = np.full((POWER.horizon_len, 2), 5.0)
        assert derive_label(history, horizon, POWER, names) == 0

    def test_power_higher_mean_is_one(self):
        names = (POWER.target_variable, "w")
        history = np.full((POWER.history_len, 2), 5.0)
        horizon = np.full((POWER.horizon_len, 2), 5.1)
        assert derive_label(history, horizon, POWER, names) == 1

    def test_short_horizon_rejected(self):
        history, horizon, names = _window_with_target(10.0, 10.0, TRAFFIC)
        with pytest.raises(InsufficientDataError):
            derive_label(history, horizon[:0], TRAFFIC, names)

    def test_delta_negation_swaps_extremes(self):
        # Mapping d -> -d must swap labels 0 and 2 and fix 1.
        rng = np.random.default_rng(7)
        swaps = {0: 2, 1: 1, 2: 0}
        for delta in rng.uniform(-6, 6, size=50):
            history, horizon, names = _window_with_target(10.0, 10.0 + delta, TRAFFIC)
            plus = derive_label(history, horizon, TRAFFIC, names)
            history, horizon, names = _window_with_target(10.0, 10.0 - delta, TRAFFIC)
            minus = derive_label(history, horizon, TRAFFIC, names)
            assert minus == swaps[plus]


class TestWindowSamples:
    def test_count_with_unit_stride(self, tiny_task):
        # 32 rows, 20 history, 1 horizon, stride 1 -> 12 windows.
        task = FINANCE
        names = (task.target_variable,) + tuple(f"v{i}" for i in range(8))
        series = make_series(32, 9, names=names)
        samples = window_samples(series, task, stride=1)
        assert len(samples) == 12

    def test_history_sized_stride(self):
        task = FINANCE
        names = (task.target_variable,) + tuple(f"v{i}" for i in range(8))
        series = make_series(40, 9, names=names)
        samples = window_samples(series, task, stride=task.history_len)
        assert len(samples) == 1

    def test_too_short_series(self, tiny_task):
        series = make_series(tiny_task.history_len, 2, names=("t0", "v1"))
        with pytest.raises(InsufficientDataError, match=str(tiny_task.history_len + 1)):
            window_samples(series, tiny_task)

    def test_labels_match_independent_recomputation(self, tiny_task):
        series = make_series(40, 2, seed=3, names=("t0", "v1"))
        for sample in window_samples(series, tiny_task, stride=1):
            start = int(
                np.flatnonzero(series.timestamps == sample.timestamps[0])[0]
            )
            h_end = start + tiny_task.history_len
            expected = derive_label(
                series.values[start:h_end],
                series.values[h_end : h_end + tiny_task.horizon_len],
                tiny_task,
                series.variable_names,
            )
            assert sample.label == expected

    def test_horizon_never_past_series_end(self, tiny_task):
        series = make_series(25, 2, names=("t0", "v1"))
        samples = window_samples(series, tiny_task, stride=1)
        need = tiny_task.history_len + tiny_task.horizon_len
        last_valid_start = series.num_rows - need
        starts = [int(s.id.rsplit("-", 1)[1]) for s in samples]
        assert max(starts) <= last_valid_start

    def test_nan_windows_dropped(self, tiny_task):
        series = make_series(20, 2, names=("t0", "v1"))
        values = series.values.copy()
        values[8, 1] = np.nan
        from tsrationale.data import SeriesTable

        table = SeriesTable(series.variable_names, series.timestamps, values)
        samples = window_samples(table, tiny_task, stride=1)
        contaminated = {
            s
            for s in range(series.num_rows)
            if s <= 8 < s + tiny_task.history_len + tiny_task.horizon_len
        }
        starts = {int(s.id.rsplit("-", 1)[1]) for s in samples}
        assert starts.isdisjoint(contaminated)

    def test_ids_deterministic(self, tiny_task):
        series = make_series(20, 2, names=("t0", "v1"))
        first = [s.id for s in window_samples(series, tiny_task)]
        second = [s.id for s in window_samples(series, tiny_task)]
        assert first == second


class TestSplit:
    @pytest.mark.parametrize(
        "total,ratio,expected",
        [(10, 0.8, (8, 2)), (1238, 0.8, (991, 247)), (5, 0.8, (4, 1))],
    )
    def test_sizes(self, total, ratio, expected, tiny_task):
        samples = [
            make_sample(f"s{i:04d}", np.full((2, 1), float(i)), names=("t0",), label=1)
            for i in range(total)
        ]
        base, query = split(samples, ratio)
        assert (len(base), len(query)) == expected

    def test_chronological(self):
        rng = np.random.default_rng(0)
        samples = []
        order = rng.permutation(30)
        for i in order:
            sample = make_sample(f"s{i:04d}", np.zeros((2, 1)), names=("t0",), label=0)
            shifted = Sample(
                id=sample.id,
                window=sample.window,
                variable_names=sample.variable_names,
                timestamps=sample.timestamps + np.timedelta64(int(i) * 3600, "s"),
                label=sample.label,
            )
            samples.append(shifted)
        base, query = split(samples, 0.8)
        assert max(s.start_ts for s in base) < min(s.start_ts for s in query)

    def test_bad_ratio(self):
        with pytest.raises(TaskError):
            split([], 1.0)


class TestPersistence:
    def test_round_trip(self, tmp_path, tiny_task):
        series = make_series(20, 3, seed=5, names=("t0", "v1", "v2"))
        samples = window_samples(series, tiny_task, stride=2)
        path = tmp_path / "samples.jsonl"
        write_samples(samples, path)
        loaded = read_samples(path)
        assert len(loaded) == len(samples)
        for a, b in zip(samples, loaded):
            assert a.id == b.id
            assert a.label == b.label
            assert a.variable_names == b.variable_names
            np.testing.assert_allclose(a.window, b.window)

    def test_distribution_sums_to_one(self, tiny_task):
        series = make_series(60, 2, seed=9, names=("t0", "v1"))
        samples = window_samples(series, tiny_task, stride=1)
        dist = label_distribution(samples, tiny_task)
        assert abs(sum(dist.values()) - 1.0) < 1e-12
