"""Query-time pipeline: summarize, retrieve, prompt, parse.

The rationale-grounded path renders the query chart, asks the summarizer
for a text abstract (used only to embed the query into the semantic
space), retrieves the top-K rationales, and prompts the predictor with
chart plus rationale priors. The six baseline prompting modes (textual /
visual x zero-shot / CoT / ICL) live here too so every comparison runs
through one record format.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backend import Backend, ChatRequest, image_part, text_part
from .chart import ChartImage, data_url, png_data_url, render_chart
from .data import Sample, TaskSpec
from .encoders import encode_text
from .errors import ModeError, PipelineError, SummaryError, TransportError
from .prompts import (
    ALL_MODES,
    CHART_SUMMARY,
    RATIONALE_INFERENCE,
    TEXTUAL_COT,
    TEXTUAL_ICL,
    TEXTUAL_ZERO_SHOT,
    VISUAL_COT,
    VISUAL_ICL,
    VISUAL_ZERO_SHOT,
    base_slots,
    serialize_window,
)
from .rationale import Rationale, RationaleBase
from .retrieval import RetrievalSet, hybrid_top_k

logger = logging.getLogger(__name__)

FENCE_RE = re.compile(r"^\s*```[a-zA-Z]*\s*|\s*```\s*$")
PREDICTION_RE = re.compile(r'"prediction"\s*:\s*"?(\d)"?')
REASONING_RE = re.compile(r'"reasoning"\s*:\s*"((?:[^"\\]|\\.)*)"')


@dataclass(frozen=True)
class Summary:
    query_id: str
    text: str

    def __post_init__(self):
        if not self.text:
            raise SummaryError(f"empty summary for query {self.query_id}")


@dataclass(frozen=True)
class AblationFlags:
    """Exemplar enrichment toggles for the rationale-grounded mode."""

    include_chart_refs: bool = False  # attach each exemplar's chart
    include_labels: bool = False  # append each exemplar's outcome meaning

    def variant_name(self, retrieval_mode: str) -> str:
        if self.include_chart_refs and self.include_labels:
            return "with-exemplar-charts-and-labels"
        if self.include_chart_refs:
            return "with-exemplar-charts"
        if self.include_labels:
            return "with-exemplar-labels"
        if retrieval_mode == "semantic-only":
            return "no-temporal-similarity"
        if retrieval_mode == "data-only":
            return "no-semantic-similarity"
        if retrieval_mode == "random":
            return "random-retrieval"
        return "standard"


@dataclass
class InferenceRecord:
    query_id: str
    mode: str
    retrieved_ids: list[str] = field(default_factory=list)
    summary_text: str = ""
    reasoning: str = ""
    prediction: int | None = None
    prompt_tokens: int = 0
    completion_tokens: int = 0
    parse_status: str = "ok"  # "ok" | "recovered" | "failed"
    failed_stage: str = ""

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class InferenceParams:
    k: int = 5
    lam: float = 0.8
    mode: str = "rationale-grounded"
    retrieval_mode: str = "hybrid"
    flags: AblationFlags = field(default_factory=AblationFlags)
    seed: int = 0
    fallback_label: int = 0
    model_id: str = "mock-chat"
    summary_model_id: str = "mock-chat"
    temperature: float = 0.0
    max_tokens: int = 1024
    allow_self_match: bool = False


def summarize(query_chart: ChartImage, task: TaskSpec, backend: Backend,
              model_id: str = "mock-chat", max_tokens: int = 512) -> Summary:
    """One summarizer call describing the chart's prominent patterns."""
    system, user = CHART_SUMMARY.render(**base_slots(task))
    request = ChatRequest(
        model_id=model_id,
        system_text=system,
        user_parts=(text_part(user), image_part(data_url(query_chart))),
        temperature=0.0,
        max_tokens=max_tokens,
    )
    response = backend.chat(request)
    return Summary(query_id=query_chart.sample_id, text=response.text.strip())


def _rationale_block(index: int, rationale: Rationale, task: TaskSpec,
                     flags: AblationFlags) -> str:
    lines = [f"Example {index}:"]
    for path in rationale.paths:
        if path.implication:
            lines.append(f"- {path.observation} -> {path.implication}")
        else:
            lines.append(f"- {path.observation}")
    if flags.include_chart_refs:
        lines.append(f"(see attached example chart {index})")
    if flags.include_labels:
        lines.append(f"Outcome: {task.meaning_of(rationale.label)}")
    return "\n".join(lines)


def _exemplar_text_block(index: int, sample: Sample, task: TaskSpec) -> str:
    return (
        f"Example {index}:\n"
        f"{serialize_window(sample)}\n"
        f"Label: {sample.label} ({task.meaning_of(sample.label)})"
    )


def _exemplar_chart_block(index: int, sample: Sample, task: TaskSpec) -> str:
    return (
        f"Example {index}: (attached chart {index})\n"
        f"Label: {sample.label} ({task.meaning_of(sample.label)})"
    )


def build_inference_prompt(
    query: Sample,
    task: TaskSpec,
    mode: str,
    query_chart: ChartImage | None = None,
    rationales: list[Rationale] | None = None,
    exemplars: list[Sample] | None = None,
    flags: AblationFlags | None = None,
    model_id: str = "mock-chat",
    temperature: float = 0.0,
    max_tokens: int = 1024,
) -> ChatRequest:
    """Construct the predictor request for any inference mode.

    The rationale-grounded mode needs retrieved ``rationales``; the two ICL
    baselines need labeled ``exemplars``; zero-shot and CoT modes need
    neither. Visual modes attach the query chart (and exemplar charts for
    visual ICL); textual modes serialize the raw window instead.
    """
    if mode not in ALL_MODES:
        raise ModeError(f"unknown inference mode {mode!r} (one of {ALL_MODES})")
    flags = flags or AblationFlags()
    slots = base_slots(task)
    parts: list[dict] = []

    if mode == "rationale-grounded":
        if not rationales:
            raise ModeError("rationale-grounded mode needs retrieved rationales")
        blocks = [
            _rationale_block(i + 1, r, task, flags) for i, r in enumerate(rationales)
        ]
        system, user = RATIONALE_INFERENCE.render(examples="\n\n".join(blocks), **slots)
        parts.append(text_part(user))
        if flags.include_chart_refs:
            for rationale in rationales:
                if not rationale.chart_ref:
                    raise ModeError(
                        f"rationale {rationale.sample_id} has no stored chart reference"
                    )
                parts.append(image_part(png_data_url(Path(rationale.chart_ref).read_bytes())))
        query_chart = query_chart or render_chart(query)
        parts.append(image_part(data_url(query_chart)))
    elif mode in ("textual-zs", "textual-cot"):
        template = TEXTUAL_ZERO_SHOT if mode == "textual-zs" else TEXTUAL_COT
        system, user = template.render(time_series_data=serialize_window(query), **slots)
        parts.append(text_part(user))
    elif mode == "textual-icl":
        if not exemplars:
            raise ModeError("textual-icl mode needs labeled exemplars")
        blocks = [
            _exemplar_text_block(i + 1, s, task) for i, s in enumerate(exemplars)
        ]
        system, user = TEXTUAL_ICL.render(
            examples="\n\n".join(blocks),
            time_series_data=serialize_window(query),
            **slots,
        )
        parts.append(text_part(user))
    elif mode in ("visual-zs", "visual-cot"):
        template = VISUAL_ZERO_SHOT if mode == "visual-zs" else VISUAL_COT
        system, user = template.render(**slots)
        parts.append(text_part(user))
        query_chart = query_chart or render_chart(query)
        parts.append(image_part(data_url(query_chart)))
    else:  # visual-icl
        if not exemplars:
            raise ModeError("visual-icl mode needs labeled exemplars")
        blocks = [
            _exemplar_chart_block(i + 1, s, task) for i, s in enumerate(exemplars)
        ]
        system, user = VISUAL_ICL.render(examples="\n\n".join(blocks), **slots)
        parts.append(text_part(user))
        for sample in exemplars:
            parts.append(image_part(data_url(render_chart(sample))))
        query_chart = query_chart or render_chart(query)
        parts.append(image_part(data_url(query_chart)))

    return ChatRequest(
        model_id=model_id,
        system_text=system,
        user_parts=tuple(parts),
        temperature=temperature,
        max_tokens=max_tokens,
    )


def parse_prediction(reply: str, task: TaskSpec,
                     fallback_label: int = 0) -> tuple[str, int, str]:
    """Extract (reasoning, label, parse_status) from a predictor reply.

    Strict pass first (a JSON object with both keys); then a recovery pass
    that strips code fences and finally falls back to a prediction-key
    regex. Anything outside the task's label set fails.
    """
    labels = set(task.labels)

    def _strict(text: str):
        data = json.loads(text)
        if not isinstance(data, dict):
            return None
        if "reasoning" not in data or "prediction" not in data:
            return None
        raw = data["prediction"]
        if isinstance(raw, bool):
            return None
        if isinstance(raw, int):
            label = raw
        elif isinstance(raw, str) and raw.strip().lstrip("-").isdigit():
            label = int(raw.strip())
        else:
            return None
        if label not in labels:
            return None
        return str(data["reasoning"]), label

    try:
        parsed = _strict(reply)
        if parsed is not None:
            return parsed[0], parsed[1], "ok"
    except (json.JSONDecodeError, TypeError):
        pass

    defenced = FENCE_RE.sub("", reply.strip())
    try:
        parsed = _strict(defenced)
        if parsed is not None:
            return parsed[0], parsed[1], "recovered"
    except (json.JSONDecodeError, TypeError):
        pass

    # Last resort still demands both keys: reasoning-before-result is a
    # contract, so a bare prediction never counts as a parse.
    match = PREDICTION_RE.search(reply)
    if match and '"reasoning"' in reply:
        label = int(match.group(1))
        if label in labels:
            reasoning_match = REASONING_RE.search(reply)
            reasoning = reasoning_match.group(1) if reasoning_match else reply
            return reasoning, label, "recovered"

    return reply, fallback_label, "failed"


def select_exemplars(base_samples: list[Sample], k: int, seed: int) -> list[Sample]:
    """Seeded uniform choice of labeled exemplars for the ICL baselines."""
    if k > len(base_samples):
        raise ModeError(f"need {k} exemplars but only {len(base_samples)} base samples")
    rng = np.random.default_rng(seed)
    picked = rng.choice(len(base_samples), size=k, replace=False)
    return [base_samples[int(i)] for i in sorted(picked)]


def infer(
    query: Sample,
    base: RationaleBase | None,
    params: InferenceParams,
    task: TaskSpec,
    summarizer: Backend,
    predictor: Backend,
    embedder: Backend,
    temporal_encoder,
    exemplars: list[Sample] | None = None,
    audit: dict | None = None,
) -> InferenceRecord:
    """Run one query end to end; stage errors produce a failed record.

    ``audit``, when given, collects intermediate artifacts (rendered
    prompts, retrieval sets) keyed by stage name.
    """
    record = InferenceRecord(query_id=query.id, mode=params.mode)
    retrieval: RetrievalSet | None = None
    rationales: list[Rationale] | None = None
    stage = "render-chart"
    try:
        chart = render_chart(query)
        if params.mode == "rationale-grounded":
            if base is None or len(base) == 0:
                raise ModeError("rationale-grounded mode needs a built rationale base")
            stage = "summarize"
            summary = _with_one_retry(
                lambda: summarize(chart, task, summarizer, params.summary_model_id)
            )
            record.summary_text = summary.text
            stage = "embed-query"
            query_temporal = temporal_encoder.encode(query)
            query_semantic = encode_text(summary.text, embedder)
            stage = "retrieve"
            exclude = None
            if not params.allow_self_match and query.id in set(base.sample_ids()):
                exclude = {query.id}
            retrieval = hybrid_top_k(
                query_temporal,
                query_semantic,
                base,
                k=params.k,
                lam=params.lam,
                mode=params.retrieval_mode,
                seed=params.seed,
                query_id=query.id,
                exclude_ids=exclude,
            )
            record.retrieved_ids = retrieval.ids()
            rationales = [base.get(sid) for sid in retrieval.ids()]
        stage = "build-prompt"
        request = build_inference_prompt(
            query,
            task,
            params.mode,
            query_chart=chart,
            rationales=rationales,
            exemplars=exemplars,
            flags=params.flags,
            model_id=params.model_id,
            temperature=params.temperature,
            max_tokens=params.max_tokens,
        )
        stage = "predict"
        response = _with_one_retry(lambda: predictor.chat(request))
        record.prompt_tokens = response.prompt_tokens
        record.completion_tokens = response.completion_tokens
        stage = "parse"
        reasoning, label, status = parse_prediction(
            response.text, task, params.fallback_label
        )
        record.reasoning = reasoning
        record.prediction = label
        record.parse_status = status
        if audit is not None:
            audit["request"] = request
            audit["retrieval"] = retrieval
            audit["response_text"] = response.text
            audit["chart"] = chart
    except PipelineError as exc:
        logger.warning("query %s failed at stage %s: %s", query.id, stage, exc)
        record.parse_status = "failed"
        record.failed_stage = stage
        record.prediction = params.fallback_label
        record.reasoning = f"stage error: {exc}"
    return record


def _with_one_retry(call):
    """Bounded-cost policy: one retry on transport failure, then give up."""
    try:
        return call()
    except TransportError:
        return call()
