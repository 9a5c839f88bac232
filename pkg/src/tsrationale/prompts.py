"""The nine prompt templates and their slot rendering.

Templates are frozen strings with named slots; rendering substitutes task
phrasing (domain wording, window lengths, the target variable, the label
menu) and nothing else. The rendered forms are pinned byte-for-byte by
golden tests, so edits here must update the goldens deliberately.
"""

from __future__ import annotations

from dataclasses import dataclass

from .data import Sample, TaskSpec

TEXTUAL_MODES = ("textual-zs", "textual-cot", "textual-icl")
VISUAL_MODES = ("visual-zs", "visual-cot", "visual-icl")
ALL_MODES = ("rationale-grounded",) + TEXTUAL_MODES + VISUAL_MODES


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    system: str
    user: str

    def render(self, **slots: str) -> tuple[str, str]:
        return self.system.format(**slots), self.user.format(**slots)


RATIONALE_GENERATION = PromptTemplate(
    name="rationale_generation",
    system=(
        "You are a senior {domain_analyst} analyst. Given the actual outcome, your task "
        "is to generate a concise, 'gold-standard' causal reasoning path that logically "
        "explains this outcome based on the provided {domain} chart. This path will be "
        "used for a retrieval system. **Do not mention the actual outcome or the final "
        "prediction in your reasoning text.**"
    ),
    user=(
        "The actual outcome for the next {future_window} was: **{true_label_meaning}**.\n"
        "\n"
        "Please provide the ideal reasoning path that explains this outcome based on "
        "the attached {history_window} data chart.\n"
        "\n"
        "**Your Task**\n"
        "\n"
        "Provide a bulleted list of key causal factors. Each bullet point must follow "
        "the format: 'Observation -> Implication'. Focus on describing the *dynamics* "
        "and *patterns*."
    ),
)

CHART_SUMMARY = PromptTemplate(
    name="chart_summary",
    system=(
        "You are a concise {domain} data analyst. Your task is to look at a "
        "{history_window} {domain} chart and provide a brief, factual summary of the "
        "most prominent patterns."
    ),
    user=(
        "Analyze the attached {history_window} {domain} data chart. Provide a "
        "one-paragraph summary describing the key trends you observe in variables. "
        "Be factual and objective."
    ),
)

RATIONALE_INFERENCE = PromptTemplate(
    name="rationale_inference",
    system=(
        "You are a world-class {domain_expert} expert.\n"
        "\n"
        "You will be given a new {history_window} data chart and several relevant "
        "historical reasoning paths.\n"
        "\n"
        "Your task is to first study the historical examples, then analyze the new "
        "chart, and finally analyze the {target} trend for the next {future_window}."
    ),
    user=(
        "Here are some relevant historical reasoning paths:\n"
        "\n"
        "{examples}\n"
        "\n"
        "**Your Task**\n"
        "\n"
        "Now, analyze the **new attached chart**. Based on your analysis of this new "
        "chart AND the patterns learned from the historical examples, predict whether "
        "the {target} in the next {future_window} will {reasoning_task}. Categorize "
        "your prediction as {label_menu}.\n"
        "\n"
        "Provide your answer in a valid JSON format with 'reasoning' and 'prediction' "
        "keys. Your 'reasoning' should be a step-by-step analysis that explicitly "
        "references both the new chart's data and the logic from the provided examples."
    ),
)

TEXTUAL_ZERO_SHOT = PromptTemplate(
    name="textual_zero_shot",
    system=(
        "You are a world-class {domain} expert.\n"
        "\n"
        "You will be given {history_window} {domain_data} data.\n"
        "\n"
        "Your task is to analyze the data and predict the {target} trend for the next "
        "{future_window}."
    ),
    user=(
        "**Time-Series Data**\n"
        "\n"
        "Here is the {history_window} data for a specific location:\n"
        "\n"
        "{time_series_data}\n"
        "\n"
        "**Your Task**\n"
        "\n"
        "Analyze the provided data. Predict the change in {target} for the next "
        "{future_window} {comparison} in the data. Categorize your prediction as "
        "{label_menu}.\n"
        "\n"
        "Provide your answer in a valid JSON format with 'reasoning' and 'prediction' "
        "keys. Your 'reasoning' should be a step-by-step analysis of the data."
    ),
)

TEXTUAL_ICL = PromptTemplate(
    name="textual_icl",
    system=(
        "You are a world-class {domain} expert.\n"
        "\n"
        "You will be shown several examples of {history_window} data, each paired with "
        "its correct label indicating the {target} change for the next {future_window}. "
        "Your task is to learn the patterns from these examples and then predict the "
        "change for new, unseen data."
    ),
    user=(
        "Analyze the following examples. Each example consists of time-series data and "
        "its corresponding label for the {target} change.\n"
        "\n"
        "{examples}\n"
        "\n"
        "**Your Task**\n"
        "\n"
        "Now, analyze the **new data** below. Based on the patterns you observed in the "
        "examples, predict the change in {target} for the next {future_window}.\n"
        "Categorize your prediction as {label_menu}.\n"
        "\n"
        "**New Data**\n"
        "\n"
        "{time_series_data}\n"
        "\n"
        "Provide your answer in a valid JSON format with 'reasoning' and 'prediction' "
        "keys. Your reasoning should be a step-by-step analysis of the new data, "
        "drawing parallels to the provided examples where applicable."
    ),
)

TEXTUAL_COT = PromptTemplate(
    name="textual_cot",
    system=(
        "You are a world-class {domain} expert.\n"
        "\n"
        "You will be given {history_window} {domain} data.\n"
        "Your task is to analyze the data and predict the {target} for the next "
        "{future_window}."
    ),
    user=(
        "**Time-Series Data**\n"
        "\n"
        "Here is the {history_window} data for a specific location:\n"
        "\n"
        "{time_series_data}\n"
        "\n"
        "**Your Task**\n"
        "\n"
        "Analyze the provided data. Predict the change in {target} for the next "
        "{future_window} {comparison} in the data. Categorize your prediction as "
        "{label_menu}.\n"
        "\n"
        "Please provide the ideal reasoning path that explains your prediction based "
        "on the provided data, following the format: 'Observation -> Implication'.\n"
        "\n"
        "Provide your answer in a valid JSON format with 'reasoning' and 'prediction' "
        "keys. Your 'reasoning' should be a step-by-step analysis of the data."
    ),
)

VISUAL_ZERO_SHOT = PromptTemplate(
    name="visual_zero_shot",
    system=(
        "You are a world-class {domain} expert.\n"
        "\n"
        "You will be given {history_window} {domain_data} data chart.\n"
        "\n"
        "Your task is to analyze the chart and predict the {target} trend for the next "
        "{future_window}."
    ),
    user=(
        "**Your Task**\n"
        "\n"
        "Analyze the **Attached Chart**. Predict the change in {target} for the next "
        "{future_window} {comparison} in the data. Categorize your prediction as "
        "{label_menu}.\n"
        "\n"
        "Provide your answer in a valid JSON format with 'reasoning' and 'prediction' "
        "keys. Your 'reasoning' should be a step-by-step analysis of the chart."
    ),
)

VISUAL_ICL = PromptTemplate(
    name="visual_icl",
    system=(
        "You are a world-class {domain} expert.\n"
        "\n"
        "You will be shown several examples of {history_window} data chart, each paired "
        "with its correct label indicating the {target} change for the next "
        "{future_window}. Your task is to learn the patterns from these examples and "
        "then predict the change for new, unseen chart."
    ),
    user=(
        "Analyze the following examples. Each example consists of a chart and its "
        "corresponding label for the {target} change.\n"
        "\n"
        "{examples}\n"
        "\n"
        "**Your Task**\n"
        "\n"
        "Now, analyze the **Attached Chart**. Based on the patterns you observed in the "
        "examples, predict the change in {target} for the next {future_window}.\n"
        "Categorize your prediction as {label_menu}.\n"
        "\n"
        "Provide your answer in a valid JSON format with 'reasoning' and 'prediction' "
        "keys. Your reasoning should be a step-by-step analysis of the new chart, "
        "drawing parallels to the provided examples where applicable."
    ),
)

VISUAL_COT = PromptTemplate(
    name="visual_cot",
    system=(
        "You are a world-class {domain} expert.\n"
        "\n"
        "You will be given {history_window} {domain} data chart.\n"
        "Your task is to analyze the chart and predict the {target} for the next "
        "{future_window}."
    ),
    user=(
        "**Your Task**\n"
        "\n"
        "Analyze the **Attached Chart**. Predict the change in {target} for the next "
        "{future_window} {comparison} in the chart. Categorize your prediction as "
        "{label_menu}.\n"
        "\n"
        "Please provide the ideal reasoning path that explains your prediction based "
        "on the attached chart, following the format: 'Observation -> Implication'.\n"
        "\n"
        "Provide your answer in a valid JSON format with 'reasoning' and 'prediction' "
        "keys. Your 'reasoning' should be a step-by-step analysis of the chart."
    ),
)

ALL_TEMPLATES = (
    RATIONALE_GENERATION,
    CHART_SUMMARY,
    RATIONALE_INFERENCE,
    TEXTUAL_ZERO_SHOT,
    TEXTUAL_ICL,
    TEXTUAL_COT,
    VISUAL_ZERO_SHOT,
    VISUAL_ICL,
    VISUAL_COT,
)


def label_menu(task: TaskSpec) -> str:
    """Render the categorization menu, e.g. ``0 (...), 1 (...), or 2 (...)``."""
    items = [f"{i} ({meaning})" for i, meaning in enumerate(task.categorize_meanings)]
    return ", ".join(items[:-1]) + ", or " + items[-1]


def base_slots(task: TaskSpec) -> dict[str, str]:
    """Slot values shared by every template for one task."""
    return {
        "domain": task.domain,
        "domain_analyst": task.domain_analyst,
        "domain_data": task.domain_data,
        "domain_expert": task.domain_expert,
        "history_window": task.history_phrase,
        "future_window": task.future_phrase,
        "target": task.target_phrase,
        "reasoning_task": task.reasoning_task_phrase,
        "comparison": task.comparison_phrase,
        "label_menu": label_menu(task),
    }


def serialize_window(sample: Sample, significant_digits: int = 4) -> str:
    """Fixed-width table of the window: one header row, 4-sig-digit cells."""
    headers = list(sample.variable_names)
    body = [[f"%.{significant_digits}g" % value for value in row] for row in sample.window]
    widths = [
        max(len(headers[j]), *(len(body[i][j]) for i in range(len(body))))
        for j in range(len(headers))
    ]
    lines = ["  ".join(headers[j].rjust(widths[j]) for j in range(len(headers)))]
    for row in body:
        lines.append("  ".join(row[j].rjust(widths[j]) for j in range(len(headers))))
    return "\n".join(lines)
