"""Metrics, reports, and the K/lambda sensitivity sweep.

Predictions here are hard labels (the predictor emits a single class), so
AUC is computed one-vs-rest from one-hot scores. Per class that reduces
exactly to (TPR + TNR) / 2, i.e. balanced accuracy; the identity is relied
on by the test oracles and should be kept in mind when reading the numbers.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .chart import save_chart
from .data import Sample, TaskSpec
from .errors import ParameterError
from .inference import InferenceParams, InferenceRecord, infer
from .rationale import RationaleBase
from .retrieval import RetrievalSet, append_audit_line, hit_rate

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # (C, C), rows = true class, cols = predicted

    def __post_init__(self):
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise ParameterError("confusion matrix must be square")

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass
class EvalReport:
    mode: str
    k: int
    lam: float
    f1: float  # percentage
    auc: float  # percentage
    hit_rate: float | None
    n_queries: int
    n_parse_failures: int
    avg_prompt_tokens: float
    variant: str = "standard"

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def make_confusion(pairs: list[tuple[int, int]], num_classes: int) -> ConfusionMatrix:
    """Counts from (true, predicted) pairs; labels must be in range."""
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    for true, pred in pairs:
        if not (0 <= true < num_classes and 0 <= pred < num_classes):
            raise ParameterError(f"label pair ({true}, {pred}) outside 0..{num_classes - 1}")
        counts[true, pred] += 1
    return ConfusionMatrix(counts)


def macro_f1(cm: ConfusionMatrix) -> float:
    """Unweighted mean of per-class F1, as a percentage.

    A class with neither support nor predictions contributes 0, which
    penalizes collapsed predictions under imbalance instead of hiding them.
    """
    if cm.total == 0:
        raise ParameterError("cannot score an empty confusion matrix")
    counts = cm.counts.astype(np.float64)
    scores = []
    for c in range(cm.num_classes):
        tp = counts[c, c]
        pred_c = counts[:, c].sum()
        true_c = counts[c, :].sum()
        precision = tp / pred_c if pred_c > 0 else 0.0
        recall = tp / true_c if true_c > 0 else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        scores.append(f1)
    return float(np.mean(scores) * 100.0)


def auc_ovr(y_true, y_pred, num_classes: int) -> float:
    """Macro one-vs-rest AUC from hard labels, as a percentage.

    One-hot scores make each class's ROC a single operating point, so the
    per-class area is (TPR + TNR) / 2. Classes with zero support are
    excluded with a warning.
    """
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise ParameterError("y_true and y_pred must be equal-length 1-D sequences")
    supports = [int((y_true == c).sum()) for c in range(num_classes)]
    supported = [c for c in range(num_classes) if supports[c] > 0]
    if len(supported) < 2:
        raise ParameterError("AUC needs at least two classes with support")
    per_class = []
    for c in range(num_classes):
        if supports[c] == 0:
            logger.warning("class %d has zero support; excluded from macro AUC", c)
            continue
        pos = y_true == c
        neg = ~pos
        tpr = float((y_pred[pos] == c).mean())
        tnr = float((y_pred[neg] != c).mean()) if neg.any() else 0.0
        per_class.append((tpr + tnr) / 2.0)
    return float(np.mean(per_class) * 100.0)


def scored_pairs(records: list[InferenceRecord],
                 query_labels: dict[str, int]) -> list[tuple[int, int]]:
    """(true, predicted) pairs for records that parsed; failures drop out."""
    pairs = []
    for record in records:
        if record.parse_status == "failed":
            continue
        if record.query_id not in query_labels:
            raise ParameterError(f"no true label for query {record.query_id!r}")
        pairs.append((query_labels[record.query_id], record.prediction))
    return pairs


def evaluate_records(
    records: list[InferenceRecord],
    query_labels: dict[str, int],
    task: TaskSpec,
    k: int,
    lam: float,
    retrievals: list[RetrievalSet] | None = None,
    base_labels: dict[str, int] | None = None,
    mode: str = "rationale-grounded",
    variant: str = "standard",
) -> EvalReport:
    """Aggregate one run's records into an EvalReport."""
    pairs = scored_pairs(records, query_labels)
    n_failures = sum(1 for r in records if r.parse_status == "failed")
    if not pairs:
        raise ParameterError("no scored records: every query failed to parse")
    cm = make_confusion(pairs, task.num_classes)
    y_true = [p[0] for p in pairs]
    y_pred = [p[1] for p in pairs]
    hr = None
    if retrievals and base_labels is not None:
        hr = hit_rate(retrievals, base_labels, query_labels)
    return EvalReport(
        mode=mode,
        k=k,
        lam=lam,
        f1=macro_f1(cm),
        auc=auc_ovr(y_true, y_pred, task.num_classes),
        hit_rate=hr,
        n_queries=len(records),
        n_parse_failures=n_failures,
        avg_prompt_tokens=float(np.mean([r.prompt_tokens for r in records])) if records else 0.0,
        variant=variant,
    )


@dataclass
class RunArtifacts:
    records: list[InferenceRecord]
    retrievals: list[RetrievalSet] = field(default_factory=list)


def run_queries(
    queries: list[Sample],
    base: RationaleBase | None,
    params: InferenceParams,
    task: TaskSpec,
    summarizer,
    predictor,
    embedder,
    temporal_encoder,
    exemplars: list[Sample] | None = None,
    run_dir: str | Path | None = None,
    audit: bool = False,
) -> RunArtifacts:
    """Run every query; per-query failures are recorded, never fatal.

    With a ``run_dir``, writes ``records`` (one JSON line each), a
    ``retrieval.jsonl`` audit log, a replayable ``manifest``, and, under
    ``--audit``, rendered prompt snapshots in ``prompts/``.
    """
    run_dir = Path(run_dir) if run_dir else None
    if run_dir:
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / "prompts").mkdir(exist_ok=True)

    artifacts = RunArtifacts(records=[])
    for query in queries:
        sink: dict = {}
        record = infer(
            query, base, params, task, summarizer, predictor, embedder,
            temporal_encoder, exemplars=exemplars, audit=sink,
        )
        artifacts.records.append(record)
        if run_dir and "chart" in sink:
            save_chart(sink["chart"], run_dir / "charts")
        retrieval = sink.get("retrieval")
        if retrieval is not None:
            artifacts.retrievals.append(retrieval)
            if run_dir:
                append_audit_line(run_dir / "retrieval.jsonl", retrieval)
        if run_dir and audit and "request" in sink:
            request = sink["request"]
            snapshot = {
                "system": request.system_text,
                "parts": [
                    p if p["type"] == "text" else {"type": "image", "bytes": len(p["data_url"])}
                    for p in request.user_parts
                ],
            }
            (run_dir / "prompts" / f"{query.id}.json").write_text(
                json.dumps(snapshot, indent=2, sort_keys=True), encoding="utf-8"
            )
    if run_dir:
        with (run_dir / "records").open("w", encoding="utf-8") as fh:
            for record in artifacts.records:
                fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
        manifest = {
            "task": task.name,
            "mode": params.mode,
            "retrieval_mode": params.retrieval_mode,
            "temporal_encoder_id": getattr(temporal_encoder, "encoder_id", "unknown"),
            "variant": params.flags.variant_name(params.retrieval_mode),
            "k": params.k,
            "lambda": params.lam,
            "seed": params.seed,
            "fallback_label": params.fallback_label,
            "include_chart_refs": params.flags.include_chart_refs,
            "include_labels": params.flags.include_labels,
            "model_id": params.model_id,
            "summary_model_id": params.summary_model_id,
            "n_queries": len(queries),
            "n_exemplars": len(exemplars) if exemplars else 0,
        }
        (run_dir / "manifest").write_text(
            json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8"
        )
    return artifacts


def sweep(
    base: RationaleBase,
    queries: list[Sample],
    query_labels: dict[str, int],
    k_values: list[int],
    lam_values: list[float],
    params: InferenceParams,
    task: TaskSpec,
    summarizer,
    predictor,
    embedder,
    temporal_encoder,
    out_dir: str | Path,
) -> dict[tuple[int, float], EvalReport]:
    """One full inference+eval run per (K, lambda) grid cell.

    Chart bytes, summaries, and embeddings are identical across cells, so
    sharing the backends' digest caches (and the deterministic mock) means
    only retrieval and the final predictor calls differ per cell.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    reports: dict[tuple[int, float], EvalReport] = {}
    base_labels = base.labels()
    for k in k_values:
        for lam in lam_values:
            cell_params = InferenceParams(**{**params.__dict__, "k": k, "lam": lam})
            cell_dir = out_dir / "sweep" / f"{k}_{lam:g}"
            artifacts = run_queries(
                queries, base, cell_params, task, summarizer, predictor,
                embedder, temporal_encoder, run_dir=cell_dir,
            )
            report = evaluate_records(
                artifacts.records, query_labels, task, k, lam,
                retrievals=artifacts.retrievals, base_labels=base_labels,
                mode=cell_params.mode,
                variant=cell_params.flags.variant_name(cell_params.retrieval_mode),
            )
            reports[(k, lam)] = report
    write_report_files(list(reports.values()), out_dir)
    write_plot_data(reports, out_dir)
    return reports


def format_report_table(reports: list[EvalReport]) -> str:
    """Aligned comparison table, one row per mode/cell."""
    headers = ["mode", "variant", "K", "lambda", "F1", "AUC", "HitRate",
               "queries", "failures", "avg_tokens"]
    rows = []
    for r in reports:
        rows.append([
            r.mode,
            r.variant,
            str(r.k),
            f"{r.lam:g}",
            f"{r.f1:.2f}",
            f"{r.auc:.2f}",
            "-" if r.hit_rate is None else f"{r.hit_rate:.4f}",
            str(r.n_queries),
            str(r.n_parse_failures),
            f"{r.avg_prompt_tokens:.1f}",
        ])
    widths = [max(len(headers[j]), *(len(row[j]) for row in rows)) for j in range(len(headers))]
    lines = ["  ".join(headers[j].ljust(widths[j]) for j in range(len(headers)))]
    lines.append("  ".join("-" * widths[j] for j in range(len(headers))))
    for row in rows:
        lines.append("  ".join(row[j].ljust(widths[j]) for j in range(len(headers))))
    return "\n".join(lines) + "\n"


def write_report_files(reports: list[EvalReport], out_dir: str | Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.txt").write_text(format_report_table(reports), encoding="utf-8")
    with (out_dir / "report.jsonl").open("w", encoding="utf-8") as fh:
        for report in reports:
            fh.write(json.dumps(report.to_dict(), sort_keys=True) + "\n")


def write_plot_data(reports: dict[tuple[int, float], EvalReport],
                    out_dir: str | Path) -> None:
    """(x, y) series per metric, vs K at each lambda and vs lambda at each K."""
    out_dir = Path(out_dir) / "plotdata"
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics = ("f1", "auc", "hit_rate")

    def value(report: EvalReport, metric: str) -> str:
        v = getattr(report, metric)
        return "" if v is None else f"{v:.6f}"

    for metric in metrics:
        lines_k = ["lambda,k," + metric]
        lines_l = ["k,lambda," + metric]
        for (k, lam), report in sorted(reports.items()):
            lines_k.append(f"{lam:g},{k},{value(report, metric)}")
            lines_l.append(f"{k},{lam:g},{value(report, metric)}")
        (out_dir / f"{metric}_vs_k.csv").write_text("\n".join(lines_k) + "\n", encoding="utf-8")
        (out_dir / f"{metric}_vs_lambda.csv").write_text("\n".join(lines_l) + "\n", encoding="utf-8")
