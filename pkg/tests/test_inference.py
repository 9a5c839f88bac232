"""Query-time pipeline: prompts per mode, reply parsing, full mock runs."""

from __future__ import annotations

import numpy as np
import pytest

from tsrationale.backend import BackendConfig, MockBackend, MockRule
from tsrationale.chart import render_chart
from tsrationale.encoders import TemporalStatsEncoder
from tsrationale.errors import ModeError, SummaryError
from tsrationale.inference import (
    AblationFlags,
    InferenceParams,
    build_inference_prompt,
    infer,
    parse_prediction,
    select_exemplars,
    summarize,
)
from tsrationale.rationale import build_base
from tsrationale.tasks import TRAFFIC

from conftest import make_sample, make_task_samples


@pytest.fixture
def built_base(tiny_task, tmp_path):
    samples = make_task_samples(tiny_task, 6)
    generator = MockBackend(BackendConfig(kind="mock"))
    embedder = MockBackend(BackendConfig(kind="mock"))
    return build_base(
        samples, tiny_task, generator, embedder, TemporalStatsEncoder(),
        base_dir=tmp_path / "base",
    )


class TestSummarize:
    def test_scripted_reply(self, tiny_task):
        rule = MockRule(responses=["Occupancy rises steadily."], contains="factual summary")
        backend = MockBackend(BackendConfig(kind="mock"), rules=[rule])
        chart = render_chart(make_task_samples(tiny_task, 1)[0])
        summary = summarize(chart, tiny_task, backend)
        assert summary.text == "Occupancy rises steadily."

    def test_empty_reply_is_error(self, tiny_task):
        rule = MockRule(responses=[""], contains="factual summary")
        backend = MockBackend(BackendConfig(kind="mock"), rules=[rule])
        chart = render_chart(make_task_samples(tiny_task, 1)[0])
        with pytest.raises(SummaryError):
            summarize(chart, tiny_task, backend)


class TestBuildInferencePrompt:
    def test_rationale_grounded_structure(self, tiny_task, built_base):
        query = make_task_samples(tiny_task, 1, seed=5)[0].without_label()
        rationales = [built_base.get(sid) for sid in built_base.sample_ids()[:5]]
        request = build_inference_prompt(
            query, tiny_task, "rationale-grounded", rationales=rationales
        )
        text = request.user_parts[0]["text"]
        assert text.count("Example ") == 5
        assert request.image_count() == 1

    def test_label_inclusion_flag(self, tiny_task, built_base):
        query = make_task_samples(tiny_task, 1, seed=5)[0].without_label()
        rationales = [built_base.get(sid) for sid in built_base.sample_ids()[:3]]
        request = build_inference_prompt(
            query, tiny_task, "rationale-grounded", rationales=rationales,
            flags=AblationFlags(include_labels=True),
        )
        text = request.user_parts[0]["text"]
        blocks = [b for b in text.split("\n\n") if b.startswith("Example")]
        assert len(blocks) == 3
        assert all("Outcome: " in block for block in blocks)

    def test_chart_inclusion_flag(self, tiny_task, tmp_path):
        samples = make_task_samples(tiny_task, 3)
        generator = MockBackend(BackendConfig(kind="mock"))
        embedder = MockBackend(BackendConfig(kind="mock"))
        base = build_base(
            samples, tiny_task, generator, embedder, TemporalStatsEncoder(),
            base_dir=tmp_path / "base", chart_dir=tmp_path / "charts",
        )
        query = make_task_samples(tiny_task, 1, seed=5)[0].without_label()
        rationales = [base.get(sid) for sid in base.sample_ids()]
        request = build_inference_prompt(
            query, tiny_task, "rationale-grounded", rationales=rationales,
            flags=AblationFlags(include_chart_refs=True),
        )
        # exemplar charts plus the query chart
        assert request.image_count() == len(rationales) + 1
        assert "(see attached example chart 1)" in request.user_parts[0]["text"]

    def test_textual_zero_shot_serializes_window(self, tiny_task):
        query = make_task_samples(tiny_task, 1)[0].without_label()
        request = build_inference_prompt(query, tiny_task, "textual-zs")
        text = request.user_parts[0]["text"]
        assert "t0" in text.splitlines()[4]
        assert request.image_count() == 0
        assert "0 (decrease by 2), 1 (remain stable), or 2 (increase by 2)" in text

    def test_traffic_textual_menu_wording(self):
        rng = np.random.default_rng(0)
        names = ("NO2", "WindSpeed", "Temperature", "Humidity", "SolarRad",
                 "Intensity", "Occupancy")
        query = make_sample("t-0", rng.normal(size=(12, 7)) + 20, names=names)
        request = build_inference_prompt(query, TRAFFIC, "textual-zs")
        assert "0 (decreases by >2)" in request.user_parts[0]["text"]

    def test_visual_icl_attaches_exemplar_charts(self, tiny_task):
        exemplars = make_task_samples(tiny_task, 3)
        query = make_task_samples(tiny_task, 1, seed=5)[0].without_label()
        request = build_inference_prompt(
            query, tiny_task, "visual-icl", exemplars=exemplars
        )
        assert request.image_count() == 4  # 3 exemplars + query

    def test_icl_without_exemplars_rejected(self, tiny_task):
        query = make_task_samples(tiny_task, 1)[0].without_label()
        for mode in ("textual-icl", "visual-icl"):
            with pytest.raises(ModeError):
                build_inference_prompt(query, tiny_task, mode)

    def test_rationale_mode_without_rationales_rejected(self, tiny_task):
        query = make_task_samples(tiny_task, 1)[0].without_label()
        with pytest.raises(ModeError):
            build_inference_prompt(query, tiny_task, "rationale-grounded")

    def test_unknown_mode_rejected(self, tiny_task):
        query = make_task_samples(tiny_task, 1)[0].without_label()
        with pytest.raises(ModeError):
            build_inference_prompt(query, tiny_task, "telepathy")


class TestParsePrediction:
    def test_strict_json(self, tiny_task):
        reasoning, label, status = parse_prediction(
            '{"reasoning": "watch the ramp", "prediction": 2}', tiny_task
        )
        assert (reasoning, label, status) == ("watch the ramp", 2, "ok")

    def test_integer_string_ok(self, tiny_task):
        _, label, status = parse_prediction(
            '{"reasoning": "r", "prediction": "1"}', tiny_task
        )
        assert (label, status) == (1, "ok")

    def test_fenced_json_recovered(self, tiny_task):
        reply = '```json\n{"reasoning": "r", "prediction": "1"}\n```'
        _, label, status = parse_prediction(reply, tiny_task)
        assert (label, status) == (1, "recovered")

    def test_regex_recovery(self, tiny_task):
        reply = 'Sure! {"reasoning": "the ramp", "prediction": 2} hope that helps'
        reasoning, label, status = parse_prediction(reply, tiny_task)
        assert (label, status) == (2, "recovered")
        assert reasoning == "the ramp"

    def test_plain_text_fails_with_fallback(self, tiny_task):
        reasoning, label, status = parse_prediction(
            "I think it will rise.", tiny_task, fallback_label=1
        )
        assert (label, status) == (1, "failed")
        assert reasoning == "I think it will rise."

    def test_out_of_range_fails(self, tiny_task):
        _, label, status = parse_prediction(
            '{"reasoning": "r", "prediction": 9}', tiny_task, fallback_label=1
        )
        assert (label, status) == (1, "failed")

    def test_missing_key_fails(self, tiny_task):
        _, _, status = parse_prediction('{"prediction": 1}', tiny_task)
        assert status == "failed"


class TestInfer:
    def _backends(self):
        return (
            MockBackend(BackendConfig(kind="mock")),
            MockBackend(BackendConfig(kind="mock")),
            MockBackend(BackendConfig(kind="mock")),
        )

    def test_deterministic_record(self, tiny_task, built_base):
        query = make_task_samples(tiny_task, 1, seed=5)[0].without_label()
        params = InferenceParams(k=3, lam=0.8)
        summarizer, predictor, embedder = self._backends()
        encoder = TemporalStatsEncoder()
        first = infer(query, built_base, params, tiny_task, summarizer, predictor,
                      embedder, encoder)
        second = infer(query, built_base, params, tiny_task, summarizer, predictor,
                       embedder, encoder)
        assert first.to_dict() == second.to_dict()
        assert first.parse_status == "ok"
        assert first.prediction in tiny_task.labels
        assert len(first.retrieved_ids) == 3

    def test_params_flow_into_retrieval(self, tiny_task, built_base):
        query = make_task_samples(tiny_task, 1, seed=5)[0].without_label()
        params = InferenceParams(k=5, lam=0.8)
        summarizer, predictor, embedder = self._backends()
        sink = {}
        infer(query, built_base, params, tiny_task, summarizer, predictor,
              embedder, TemporalStatsEncoder(), audit=sink)
        retrieval = sink["retrieval"]
        assert retrieval.k == 5
        assert retrieval.lam == 0.8
        assert len(retrieval.entries) == 5

    def test_baseline_modes_skip_retrieval(self, tiny_task, built_base):
        query = make_task_samples(tiny_task, 1, seed=5)[0].without_label()
        summarizer, predictor, embedder = self._backends()
        for mode in ("textual-zs", "visual-zs", "textual-cot", "visual-cot"):
            params = InferenceParams(mode=mode)
            sink = {}
            record = infer(query, None, params, tiny_task, summarizer, predictor,
                           embedder, TemporalStatsEncoder(), audit=sink)
            assert record.retrieved_ids == []
            assert record.summary_text == ""
            assert sink.get("retrieval") is None
            assert record.parse_status == "ok"

    def test_stage_error_yields_failed_record(self, tiny_task, built_base):
        query = make_task_samples(tiny_task, 1, seed=5)[0].without_label()
        bad_summarizer = MockBackend(
            BackendConfig(kind="mock"),
            rules=[MockRule(responses=[""], contains="factual summary")],
        )
        _, predictor, embedder = self._backends()
        params = InferenceParams(k=3, fallback_label=1)
        record = infer(query, built_base, params, tiny_task, bad_summarizer,
                       predictor, embedder, TemporalStatsEncoder())
        assert record.parse_status == "failed"
        assert record.failed_stage == "summarize"
        assert record.prediction == 1

    def test_random_retrieval_mode_seeded(self, tiny_task, built_base):
        query = make_task_samples(tiny_task, 1, seed=5)[0].without_label()
        summarizer, predictor, embedder = self._backends()
        params = InferenceParams(k=3, retrieval_mode="random", seed=11)
        first = infer(query, built_base, params, tiny_task, summarizer, predictor,
                      embedder, TemporalStatsEncoder())
        second = infer(query, built_base, params, tiny_task, summarizer, predictor,
                       embedder, TemporalStatsEncoder())
        assert first.retrieved_ids == second.retrieved_ids


class TestSelectExemplars:
    def test_seeded_and_sorted(self, tiny_task):
        samples = make_task_samples(tiny_task, 8)
        a = select_exemplars(samples, 3, seed=1)
        b = select_exemplars(samples, 3, seed=1)
        assert [s.id for s in a] == [s.id for s in b]
        c = select_exemplars(samples, 3, seed=2)
        assert [s.id for s in a] != [s.id for s in c]

    def test_too_many_requested(self, tiny_task):
        samples = make_task_samples(tiny_task, 2)
        with pytest.raises(ModeError):
            select_exemplars(samples, 5, seed=0)
