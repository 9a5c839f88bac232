"""Input validation helpers shared by the estimator surface and the CLI."""

from __future__ import annotations

import numpy as np

from .data import Sample, TaskSpec
from .errors import TaskError


def check_samples(samples, task: TaskSpec, require_labels: bool = False) -> list[Sample]:
    """Validate a sample collection against its task; returns it as a list."""
    samples = list(samples)
    if not samples:
        raise TaskError("empty sample collection")
    names = samples[0].variable_names
    for sample in samples:
        if not isinstance(sample, Sample):
            raise TaskError(f"expected Sample, got {type(sample).__name__}")
        if sample.variable_names != names:
            raise TaskError(f"sample {sample.id}: inconsistent variable names")
        if sample.window.shape[0] != task.history_len:
            raise TaskError(
                f"sample {sample.id}: window has {sample.window.shape[0]} rows, "
                f"task {task.name!r} expects {task.history_len}"
            )
        if not np.isfinite(sample.window).all():
            raise TaskError(f"sample {sample.id}: window contains non-finite values")
        if require_labels and sample.label is None:
            raise TaskError(f"sample {sample.id}: label required")
        if sample.label is not None and sample.label not in task.labels:
            raise TaskError(
                f"sample {sample.id}: label {sample.label} outside {task.labels}"
            )
        if task.target_variable not in sample.variable_names:
            raise TaskError(
                f"sample {sample.id}: target {task.target_variable!r} missing"
            )
    return samples
