"""Built-in task definitions for the three benchmark domains."""

from __future__ import annotations

from .data import MEAN_COMPARISON_BINARY, THRESHOLD_DELTA_3CLASS, TaskSpec
from .errors import TaskError

FINANCE = TaskSpec(
    name="finance",
    history_len=20,
    horizon_len=1,
    target_variable="S&P 500",
    label_rule=THRESHOLD_DELTA_3CLASS,
    class_meanings=(
        "decrease by over 1%",
        "remain stable",
        "increase by over 1%",
    ),
    delta=0.01,
    delta_is_relative=True,
    domain="finance",
    domain_analyst="financial markets",
    domain_data="financial market",
    domain_expert="financial market",
    history_phrase="20-day",
    future_phrase="day",
    target_phrase="S&P 500",
    reasoning_task_phrase="increase by over 1%, decrease by over 1%, or remain stable",
    comparison_phrase="compared to the last day",
    categorize_meanings=(
        "decrease by more than 1%",
        "remain neutral (i.e., between -1% and 1%)",
        "increase by more than 1%",
    ),
)

TRAFFIC = TaskSpec(
    name="traffic",
    history_len=12,
    horizon_len=1,
    target_variable="Occupancy",
    label_rule=THRESHOLD_DELTA_3CLASS,
    class_meanings=(
        "decrease by 2",
        "remain stable",
        "increase by 2",
    ),
    delta=2.0,
    delta_is_relative=False,
    domain="traffic",
    domain_analyst="traffic and urban",
    domain_data="traffic and environment",
    domain_expert="traffic",
    history_phrase="12-hour",
    future_phrase="hour",
    target_phrase="Occupancy",
    reasoning_task_phrase="increase by 2, decrease by 2, or remain stable",
    comparison_phrase="compared to the last hour",
    categorize_meanings=(
        "decreases by >2",
        "changes within [-2, 2]",
        "increases by >2",
    ),
)

POWER = TaskSpec(
    name="power",
    history_len=144,  # 24 hours of 10-minute records
    horizon_len=36,  # 6 hours
    target_variable="Patv",
    label_rule=MEAN_COMPARISON_BINARY,
    class_meanings=(
        "not surpass that of the past 24 hours",
        "surpass that of the past 24 hours",
    ),
    domain="wind power",
    domain_analyst="wind power",
    domain_data="wind power",
    domain_expert="wind power generation",
    history_phrase="24-hour",
    future_phrase="6 hours",
    target_phrase="average active power ('Patv')",
    reasoning_task_phrase="be higher than the average of the past 24 hours",
    comparison_phrase="compared to the average of the past 24 hours",
    categorize_meanings=(
        "will not surpass the past average",
        "will surpass the past average",
    ),
)

BUILTIN_TASKS: dict[str, TaskSpec] = {
    task.name: task for task in (FINANCE, TRAFFIC, POWER)
}


def get_task(name: str) -> TaskSpec:
    try:
        return BUILTIN_TASKS[name]
    except KeyError:
        known = ", ".join(sorted(BUILTIN_TASKS))
        raise TaskError(f"unknown task {name!r} (built-in tasks: {known})") from None
