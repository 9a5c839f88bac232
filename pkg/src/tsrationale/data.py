"""Windowed, labeled samples from raw multivariate series.

A raw delimiter-separated file becomes a :class:`SeriesTable`, which is cut
into fixed-length history windows. Each window gets a discrete trend label
derived from the horizon that follows it, and the labeled windows are split
chronologically into a base set (for rationale building) and a query set
(for inference).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import (
    DataParseError,
    InsufficientDataError,
    OrderingError,
    SchemaError,
    TaskError,
)

THRESHOLD_DELTA_3CLASS = "threshold-delta-3class"
MEAN_COMPARISON_BINARY = "mean-comparison-binary"


@dataclass(frozen=True)
class TaskSpec:
    """Definition of one windowed classification task.

    ``delta`` is the stability threshold of the 3-class rule, interpreted
    relative (fraction of the last history value) when ``delta_is_relative``
    and as an absolute difference otherwise. ``class_meanings`` maps label
    ``i`` to its human phrasing and fixes the label set.

    The ``*_phrase``/``domain_*`` fields feed the prompt templates; each
    defaults to a sensible rewording of ``domain`` when left empty.
    """

    name: str
    history_len: int
    horizon_len: int
    target_variable: str
    label_rule: str
    class_meanings: tuple[str, ...]
    delta: float = 0.0
    delta_is_relative: bool = True

    domain: str = ""
    domain_analyst: str = ""
    domain_data: str = ""
    domain_expert: str = ""
    history_phrase: str = ""
    future_phrase: str = ""
    target_phrase: str = ""
    reasoning_task_phrase: str = ""
    comparison_phrase: str = ""
    categorize_meanings: tuple[str, ...] = ()

    def __post_init__(self):
        if self.label_rule not in (THRESHOLD_DELTA_3CLASS, MEAN_COMPARISON_BINARY):
            raise TaskError(f"unknown label rule {self.label_rule!r}")
        expected = 3 if self.label_rule == THRESHOLD_DELTA_3CLASS else 2
        if len(self.class_meanings) != expected:
            raise TaskError(
                f"task {self.name!r}: {self.label_rule} needs {expected} class "
                f"meanings, got {len(self.class_meanings)}"
            )
        if self.label_rule == THRESHOLD_DELTA_3CLASS and not self.delta > 0:
            raise TaskError(f"task {self.name!r}: delta must be > 0 for the 3-class rule")
        if self.history_len < 1 or self.horizon_len < 1:
            raise TaskError(f"task {self.name!r}: window lengths must be >= 1")
        # Fill prompt phrasing defaults without fighting the frozen dataclass.
        object.__setattr__(self, "domain", self.domain or self.name)
        object.__setattr__(self, "domain_analyst", self.domain_analyst or self.domain)
        object.__setattr__(self, "domain_data", self.domain_data or self.domain)
        object.__setattr__(self, "domain_expert", self.domain_expert or self.domain)
        object.__setattr__(self, "target_phrase", self.target_phrase or self.target_variable)
        object.__setattr__(
            self, "categorize_meanings", tuple(self.categorize_meanings) or self.class_meanings
        )

    @property
    def num_classes(self) -> int:
        return len(self.class_meanings)

    @property
    def labels(self) -> tuple[int, ...]:
        return tuple(range(self.num_classes))

    def meaning_of(self, label: int) -> str:
        if label not in self.labels:
            raise TaskError(f"label {label} outside {self.name!r} label set {self.labels}")
        return self.class_meanings[label]


@dataclass(frozen=True)
class SeriesTable:
    """Raw multivariate series: T_total rows of N numeric variables."""

    variable_names: tuple[str, ...]
    timestamps: np.ndarray  # datetime64[ns], strictly increasing
    values: np.ndarray  # (T_total, N) float64

    def __post_init__(self):
        if len(set(self.variable_names)) != len(self.variable_names):
            raise SchemaError("duplicate variable names")
        if self.values.ndim != 2 or self.values.shape[1] != len(self.variable_names):
            raise SchemaError(
                f"values shape {self.values.shape} inconsistent with "
                f"{len(self.variable_names)} variables"
            )
        if len(self.timestamps) != self.values.shape[0]:
            raise SchemaError("timestamp count does not match row count")
        diffs = np.diff(self.timestamps)
        if len(diffs) and not (diffs > np.timedelta64(0, "ns")).all():
            bad = int(np.argmin(diffs > np.timedelta64(0, "ns")))
            raise OrderingError(f"timestamps not strictly increasing at row {bad + 1}")

    @property
    def frequency(self) -> np.timedelta64:
        """Spacing between the first two rows (the nominal sampling step)."""
        if len(self.timestamps) < 2:
            return np.timedelta64(0, "ns")
        return self.timestamps[1] - self.timestamps[0]

    @property
    def num_rows(self) -> int:
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        try:
            idx = self.variable_names.index(name)
        except ValueError:
            raise SchemaError(f"unknown variable {name!r}") from None
        return self.values[:, idx]


@dataclass(frozen=True)
class Sample:
    """One windowed instance: a (history_len x N) matrix plus metadata."""

    id: str
    window: np.ndarray
    variable_names: tuple[str, ...]
    timestamps: np.ndarray
    label: int | None = None

    def __post_init__(self):
        if self.window.ndim != 2:
            raise TaskError(f"sample {self.id}: window must be 2-D")
        if self.window.shape[1] != len(self.variable_names):
            raise TaskError(f"sample {self.id}: column count != variable names")
        if len(self.timestamps) != self.window.shape[0]:
            raise TaskError(f"sample {self.id}: timestamp count != row count")

    @property
    def start_ts(self) -> np.datetime64:
        return self.timestamps[0]

    def target_column(self, task: TaskSpec) -> np.ndarray:
        try:
            idx = self.variable_names.index(task.target_variable)
        except ValueError:
            raise SchemaError(
                f"sample {self.id}: target variable {task.target_variable!r} absent"
            ) from None
        return self.window[:, idx]

    def without_label(self) -> "Sample":
        return replace(self, label=None)


@dataclass(frozen=True)
class ColumnSchema:
    """Column map for :func:`load_dataset`.

    ``timestamp_format`` is either ``"iso"`` (ISO-8601 strings) or
    ``"epoch"`` (seconds since the epoch).
    """

    timestamp_column: str
    variable_columns: tuple[str, ...]
    timestamp_format: str = "iso"
    delimiter: str = ","


def load_dataset(path: str | Path, schema: ColumnSchema) -> SeriesTable:
    """Read a delimiter-separated file into a SeriesTable, sorted by time."""
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"dataset file not found: {path}")
    frame = pd.read_csv(path, delimiter=schema.delimiter, dtype=str, keep_default_na=False)
    for col in (schema.timestamp_column, *schema.variable_columns):
        if col not in frame.columns:
            raise SchemaError(f"declared column {col!r} absent from {path.name}")

    raw_ts = frame[schema.timestamp_column]
    if schema.timestamp_format == "epoch":
        parsed = pd.to_datetime(pd.to_numeric(raw_ts, errors="coerce"), unit="s")
    elif schema.timestamp_format == "iso":
        parsed = pd.to_datetime(raw_ts, errors="coerce", format="ISO8601")
    else:
        raise SchemaError(f"unknown timestamp format {schema.timestamp_format!r}")
    if parsed.isna().any():
        row = int(parsed.isna().idxmax())
        raise DataParseError(f"unparseable timestamp at row {row}: {raw_ts.iloc[row]!r}")

    columns = []
    for col in schema.variable_columns:
        cells = frame[col].str.strip()
        numeric = pd.to_numeric(cells.replace("", np.nan), errors="coerce")
        bad = numeric.isna() & (cells != "")
        if bad.any():
            row = int(bad.idxmax())
            raise DataParseError(f"non-numeric cell in column {col!r} at row {row}: {cells.iloc[row]!r}")
        columns.append(numeric.to_numpy(dtype=np.float64))

    values = np.column_stack(columns)
    order = np.argsort(parsed.to_numpy(), kind="stable")
    return SeriesTable(
        variable_names=tuple(schema.variable_columns),
        timestamps=parsed.to_numpy()[order],
        values=values[order],
    )


def derive_label(
    history: np.ndarray,
    horizon: np.ndarray,
    task: TaskSpec,
    variable_names: tuple[str, ...],
) -> int:
    """Label a window from the horizon that follows it.

    3-class rule: compare the target at the final horizon step against the
    target at the final history step; moves strictly beyond ``delta`` map to
    0 (down) or 2 (up), anything else (boundary included) to 1 (stable).
    Binary rule: 1 iff the horizon mean of the target strictly exceeds the
    history mean.
    """
    if history.shape[0] < 1:
        raise InsufficientDataError("history window is empty")
    if horizon.shape[0] != task.horizon_len:
        raise InsufficientDataError(
            f"horizon has {horizon.shape[0]} rows, task needs {task.horizon_len}"
        )
    try:
        idx = variable_names.index(task.target_variable)
    except ValueError:
        raise SchemaError(f"target variable {task.target_variable!r} absent") from None

    target_hist = history[:, idx]
    target_hori = horizon[:, idx]

    if task.label_rule == MEAN_COMPARISON_BINARY:
        return int(float(np.mean(target_hori)) > float(np.mean(target_hist)))

    last = float(target_hist[-1])
    nxt = float(target_hori[-1])
    if task.delta_is_relative:
        lower = last * (1.0 - task.delta)
        upper = last * (1.0 + task.delta)
    else:
        lower = last - task.delta
        upper = last + task.delta
    if nxt < lower:
        return 0
    if nxt > upper:
        return 2
    return 1


def window_samples(series: SeriesTable, task: TaskSpec, stride: int | None = None) -> list[Sample]:
    """Cut the series into labeled sliding windows.

    Windows with any missing cell (history or horizon) are dropped. Stride
    defaults to ``horizon_len`` so consecutive predictions do not overlap.
    """
    if stride is None:
        stride = task.horizon_len
    if stride < 1:
        raise TaskError("stride must be >= 1")
    total_needed = task.history_len + task.horizon_len
    if series.num_rows < total_needed:
        raise InsufficientDataError(
            f"series has {series.num_rows} rows; windowing needs at least {total_needed}"
        )
    if task.target_variable not in series.variable_names:
        raise SchemaError(f"target variable {task.target_variable!r} absent from series")

    samples: list[Sample] = []
    for start in range(0, series.num_rows - total_needed + 1, stride):
        h_end = start + task.history_len
        f_end = h_end + task.horizon_len
        history = series.values[start:h_end]
        horizon = series.values[h_end:f_end]
        if not (np.isfinite(history).all() and np.isfinite(horizon).all()):
            continue
        label = derive_label(history, horizon, task, series.variable_names)
        samples.append(
            Sample(
                id=f"{task.name}-{start:06d}",
                window=history.copy(),
                variable_names=series.variable_names,
                timestamps=series.timestamps[start:h_end].copy(),
                label=label,
            )
        )
    return samples


def split(samples: list[Sample], ratio: float) -> tuple[list[Sample], list[Sample]]:
    """Chronological split: the earliest ceil(D * ratio) windows become the base."""
    if not 0 < ratio < 1:
        raise TaskError(f"split ratio must lie in (0, 1), got {ratio}")
    ordered = sorted(samples, key=lambda s: s.start_ts)
    cut = math.ceil(len(ordered) * ratio)
    return ordered[:cut], ordered[cut:]


def label_distribution(samples: list[Sample], task: TaskSpec) -> dict[int, float]:
    """Fraction of samples per label (0.0 for unseen labels)."""
    counts = {label: 0 for label in task.labels}
    for sample in samples:
        if sample.label is None:
            raise TaskError(f"sample {sample.id} has no label")
        counts[sample.label] += 1
    total = max(len(samples), 1)
    return {label: counts[label] / total for label in task.labels}


def _ts_to_iso(ts: np.datetime64) -> str:
    return np.datetime_as_string(ts.astype("datetime64[s]"))


def write_samples(samples: list[Sample], path: str | Path) -> None:
    """Persist samples as one JSON record per line (row-major matrix)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for sample in samples:
            record = {
                "id": sample.id,
                "start_ts": _ts_to_iso(sample.start_ts),
                "timestamps": [_ts_to_iso(ts) for ts in sample.timestamps],
                "variable_names": list(sample.variable_names),
                "rows": int(sample.window.shape[0]),
                "cols": int(sample.window.shape[1]),
                "matrix": [float(v) for v in sample.window.reshape(-1)],
                "label": sample.label,
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def read_samples(path: str | Path) -> list[Sample]:
    """Load samples written by :func:`write_samples`."""
    samples = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            window = np.array(record["matrix"], dtype=np.float64).reshape(
                record["rows"], record["cols"]
            )
            samples.append(
                Sample(
                    id=record["id"],
                    window=window,
                    variable_names=tuple(record["variable_names"]),
                    timestamps=np.array(record["timestamps"], dtype="datetime64[ns]"),
                    label=record["label"],
                )
            )
    return samples
