"""Operator surface: ingest -> build-base -> infer -> eval -> sweep -> report.

Configuration lives in a JSON file; command-line flags override file values.
Every run directory carries a manifest with the full parameterization so a
mock-backend run can be replayed bit-identically.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .backend import BackendConfig, make_backend
from .data import (
    ColumnSchema,
    TaskSpec,
    label_distribution,
    load_dataset,
    read_samples,
    split,
    window_samples,
    write_samples,
)
from .encoders import make_temporal_encoder
from .errors import PipelineError, StateError
from .evaluate import (
    evaluate_records,
    format_report_table,
    run_queries,
    sweep,
    write_report_files,
)
from .inference import AblationFlags, InferenceParams, InferenceRecord, select_exemplars
from .prompts import ALL_MODES
from .rationale import BuildPolicy, RationaleBase, build_base
from .retrieval import RetrievalSet, ScoredRationale
from .tasks import get_task

ROLES = ("generator", "summarizer", "predictor", "embedder")


class RunConfig:
    """Config file contents plus flag overrides, with derived paths."""

    def __init__(self, raw: dict):
        self.raw = raw
        self.task = self._resolve_task(raw)
        self.work_dir = Path(raw.get("work_dir", "work"))
        self.cache_dir = raw.get("cache_dir")
        self.stride = raw.get("stride")
        self.split_ratio = float(raw.get("split_ratio", 0.8))
        self.encoder = raw.get("encoder", "builtin-stats")
        self.encoder_url = raw.get("encoder_url")
        self.k = int(raw.get("k", 5))
        self.lam = float(raw.get("lambda", 0.8))
        self.mode = raw.get("mode", "rationale-grounded")
        self.retrieval_mode = raw.get("retrieval_mode", "hybrid")
        self.include_chart_refs = bool(raw.get("include_chart_refs", False))
        self.include_labels = bool(raw.get("include_labels", False))
        self.seed = int(raw.get("seed", 0))
        self.max_regen = int(raw.get("max_regen", 1))
        self.fallback_label = raw.get("fallback_label")
        self.n_exemplars = raw.get("n_exemplars")
        self.audit = bool(raw.get("audit", False))
        self.sweep_grid = raw.get("sweep", {"k_values": [1, 5], "lambda_values": [0.0, 0.5, 1.0]})
        if self.mode not in ALL_MODES:
            raise PipelineError(f"unknown mode {self.mode!r} (one of {ALL_MODES})")

    @staticmethod
    def _resolve_task(raw: dict) -> TaskSpec:
        if "custom_task" in raw:
            fields = dict(raw["custom_task"])
            fields["class_meanings"] = tuple(fields["class_meanings"])
            if "categorize_meanings" in fields:
                fields["categorize_meanings"] = tuple(fields["categorize_meanings"])
            return TaskSpec(**fields)
        return get_task(raw.get("task", "traffic"))

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        raw: dict = {}
        if args.config:
            raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        for key, attr in (
            ("task", "task"),
            ("k", "k"),
            ("mode", "mode"),
            ("seed", "seed"),
            ("retrieval_mode", "retrieval_mode"),
        ):
            value = getattr(args, attr, None)
            if value is not None:
                raw[key] = value
        if getattr(args, "lam", None) is not None:
            raw["lambda"] = args.lam
        if getattr(args, "backend", None):
            backends = raw.setdefault("backends", {})
            for role in ROLES:
                backends.setdefault(role, {})["kind"] = args.backend
                if args.backend == "mock":
                    backends[role].pop("base_url", None)
        if getattr(args, "include_chart_refs", False):
            raw["include_chart_refs"] = True
        if getattr(args, "include_labels", False):
            raw["include_labels"] = True
        if getattr(args, "audit", False):
            raw["audit"] = True
        if getattr(args, "work_dir", None):
            raw["work_dir"] = args.work_dir
        return cls(raw)

    # Derived layout under work_dir.
    @property
    def base_samples_path(self) -> Path:
        return self.work_dir / "samples_base.jsonl"

    @property
    def query_samples_path(self) -> Path:
        return self.work_dir / "samples_query.jsonl"

    @property
    def base_dir(self) -> Path:
        return self.work_dir / "base"

    @property
    def charts_dir(self) -> Path:
        return self.work_dir / "charts"

    def run_dir(self) -> Path:
        flags = AblationFlags(self.include_chart_refs, self.include_labels)
        variant = flags.variant_name(self.retrieval_mode)
        return self.work_dir / "runs" / f"{self.mode}__{variant}__k{self.k}_l{self.lam:g}"

    def backend_for(self, role: str):
        spec = dict(self.raw.get("backends", {}).get(role, {}))
        spec.setdefault("kind", "mock")
        if self.cache_dir and "cache_dir" not in spec:
            spec["cache_dir"] = str(Path(self.cache_dir) / role)
        return make_backend(BackendConfig(**spec))

    def schema(self) -> ColumnSchema:
        data = self.raw.get("data")
        if not data:
            raise PipelineError("config has no 'data' section")
        return ColumnSchema(
            timestamp_column=data["timestamp_column"],
            variable_columns=tuple(data["variable_columns"]),
            timestamp_format=data.get("timestamp_format", "iso"),
            delimiter=data.get("delimiter", ","),
        )

    def data_path(self) -> Path:
        data = self.raw.get("data")
        if not data or "path" not in data:
            raise PipelineError("config has no data path")
        return Path(data["path"])

    def inference_params(self, fallback_label: int) -> InferenceParams:
        predictor_spec = self.raw.get("backends", {}).get("predictor", {})
        summarizer_spec = self.raw.get("backends", {}).get("summarizer", {})
        return InferenceParams(
            k=self.k,
            lam=self.lam,
            mode=self.mode,
            retrieval_mode=self.retrieval_mode,
            flags=AblationFlags(self.include_chart_refs, self.include_labels),
            seed=self.seed,
            fallback_label=fallback_label,
            model_id=predictor_spec.get("model", "mock-chat"),
            summary_model_id=summarizer_spec.get("model", "mock-chat"),
        )


def _resolve_fallback(cfg: RunConfig, base_samples) -> int:
    if cfg.fallback_label is not None:
        return int(cfg.fallback_label)
    labels = [s.label for s in base_samples if s.label is not None]
    if not labels:
        return 0
    return int(np.bincount(labels).argmax())


def cmd_ingest(cfg: RunConfig) -> int:
    series = load_dataset(cfg.data_path(), cfg.schema())
    samples = window_samples(series, cfg.task, cfg.stride)
    base_set, query_set = split(samples, cfg.split_ratio)
    cfg.work_dir.mkdir(parents=True, exist_ok=True)
    write_samples(base_set, cfg.base_samples_path)
    write_samples(query_set, cfg.query_samples_path)

    dist = label_distribution(samples, cfg.task)
    print(f"task: {cfg.task.name}")
    print(f"samples: {len(samples)} (base {len(base_set)}, query {len(query_set)})")
    print(f"{'label':<6}{'meaning':<40}{'count':>8}{'percent':>9}")
    counts = {label: 0 for label in cfg.task.labels}
    for sample in samples:
        counts[sample.label] += 1
    for label in cfg.task.labels:
        print(
            f"{label:<6}{cfg.task.meaning_of(label):<40}"
            f"{counts[label]:>8}{dist[label] * 100:>8.2f}%"
        )
    return 0


def cmd_build_base(cfg: RunConfig) -> int:
    base_samples = read_samples(cfg.base_samples_path)
    generator_spec = cfg.raw.get("backends", {}).get("generator", {})
    policy = BuildPolicy(
        max_regen=cfg.max_regen, model_id=generator_spec.get("model", "mock-chat")
    )
    base = build_base(
        base_samples,
        cfg.task,
        cfg.backend_for("generator"),
        cfg.backend_for("embedder"),
        make_temporal_encoder(cfg.encoder, cfg.encoder_url),
        policy=policy,
        base_dir=cfg.base_dir,
        chart_dir=cfg.charts_dir,
    )
    manifest = json.loads((cfg.base_dir / "manifest").read_text(encoding="utf-8"))
    print(json.dumps(manifest, indent=2, sort_keys=True))
    print(f"base built: {len(base)} rationales at {cfg.base_dir}")
    return 0


def _load_base_if_needed(cfg: RunConfig) -> RationaleBase | None:
    if cfg.mode != "rationale-grounded":
        return None
    if not (cfg.base_dir / "manifest").exists():
        raise StateError(f"no rationale base at {cfg.base_dir}; run build-base first")
    return RationaleBase.load(cfg.base_dir)


def cmd_infer(cfg: RunConfig) -> int:
    queries = read_samples(cfg.query_samples_path)
    base_samples = read_samples(cfg.base_samples_path) if cfg.base_samples_path.exists() else []
    base = _load_base_if_needed(cfg)
    fallback = _resolve_fallback(cfg, base_samples)
    exemplars = None
    if cfg.mode in ("textual-icl", "visual-icl"):
        n = cfg.n_exemplars or cfg.k
        exemplars = select_exemplars(base_samples, n, cfg.seed)
    params = cfg.inference_params(fallback)
    run_dir = cfg.run_dir()
    artifacts = run_queries(
        [q.without_label() for q in queries],
        base,
        params,
        cfg.task,
        cfg.backend_for("summarizer"),
        cfg.backend_for("predictor"),
        cfg.backend_for("embedder"),
        make_temporal_encoder(cfg.encoder, cfg.encoder_url),
        exemplars=exemplars,
        run_dir=run_dir,
        audit=cfg.audit,
    )
    failures = sum(1 for r in artifacts.records if r.parse_status == "failed")
    print(f"run dir: {run_dir}")
    print(f"records: {len(artifacts.records)} ({failures} failed)")
    return 0


def _read_records(run_dir: Path) -> list[InferenceRecord]:
    records = []
    for line in (run_dir / "records").read_text(encoding="utf-8").splitlines():
        if line.strip():
            records.append(InferenceRecord(**json.loads(line)))
    return records


def _read_retrievals(run_dir: Path) -> list[RetrievalSet]:
    path = run_dir / "retrieval.jsonl"
    if not path.exists():
        return []
    retrievals = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        retrievals.append(
            RetrievalSet(
                query_id=record["query_id"],
                entries=tuple(
                    ScoredRationale(e["id"], e["sim_b"], e["sim_s"], e["sim_final"])
                    for e in record["entries"]
                ),
                k=record["k"],
                lam=record["lambda"],
                mode=record.get("mode", "hybrid"),
            )
        )
    return retrievals


def cmd_eval(cfg: RunConfig, run_dir: str | None = None) -> int:
    run_path = Path(run_dir) if run_dir else cfg.run_dir()
    records = _read_records(run_path)
    queries = read_samples(cfg.query_samples_path)
    query_labels = {q.id: q.label for q in queries}
    retrievals = _read_retrievals(run_path)
    base_labels = None
    if retrievals and (cfg.base_dir / "manifest").exists():
        base_labels = RationaleBase.load(cfg.base_dir).labels()
    manifest = json.loads((run_path / "manifest").read_text(encoding="utf-8"))
    report = evaluate_records(
        records,
        query_labels,
        cfg.task,
        k=manifest.get("k", cfg.k),
        lam=manifest.get("lambda", cfg.lam),
        retrievals=retrievals or None,
        base_labels=base_labels,
        mode=manifest.get("mode", cfg.mode),
        variant=manifest.get("variant", "standard"),
    )
    write_report_files([report], run_path)
    print(format_report_table([report]), end="")
    return 0


def cmd_sweep(cfg: RunConfig, k_values=None, lam_values=None) -> int:
    queries = read_samples(cfg.query_samples_path)
    base_samples = read_samples(cfg.base_samples_path)
    base = RationaleBase.load(cfg.base_dir)
    fallback = _resolve_fallback(cfg, base_samples)
    params = cfg.inference_params(fallback)
    grid_k = k_values or [int(v) for v in cfg.sweep_grid.get("k_values", [1, 5])]
    grid_l = lam_values or [float(v) for v in cfg.sweep_grid.get("lambda_values", [0.0, 0.5, 1.0])]
    out_dir = cfg.work_dir / "sweeps"
    query_labels = {q.id: q.label for q in queries}
    reports = sweep(
        base,
        [q.without_label() for q in queries],
        query_labels,
        grid_k,
        grid_l,
        params,
        cfg.task,
        cfg.backend_for("summarizer"),
        cfg.backend_for("predictor"),
        cfg.backend_for("embedder"),
        make_temporal_encoder(cfg.encoder, cfg.encoder_url),
        out_dir,
    )
    print(format_report_table(list(reports.values())), end="")
    print(f"sweep artifacts under {out_dir}")
    return 0


def cmd_report(cfg: RunConfig, run_dirs: list[str]) -> int:
    queries = read_samples(cfg.query_samples_path)
    query_labels = {q.id: q.label for q in queries}
    base_labels = None
    if (cfg.base_dir / "manifest").exists():
        base_labels = RationaleBase.load(cfg.base_dir).labels()
    reports = []
    for run_dir in run_dirs:
        run_path = Path(run_dir)
        manifest = json.loads((run_path / "manifest").read_text(encoding="utf-8"))
        retrievals = _read_retrievals(run_path)
        reports.append(
            evaluate_records(
                _read_records(run_path),
                query_labels,
                cfg.task,
                k=manifest.get("k", cfg.k),
                lam=manifest.get("lambda", cfg.lam),
                retrievals=retrievals or None,
                base_labels=base_labels if retrievals else None,
                mode=manifest.get("mode", "unknown"),
                variant=manifest.get("variant", "standard"),
            )
        )
    write_report_files(reports, cfg.work_dir)
    print(format_report_table(reports), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tsrationale",
        description="Rationale-grounded time series trend inference pipeline",
    )
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--task", help="built-in task name (finance|traffic|power)")
    parser.add_argument("--backend", help="override every role backend kind (mock|http)")
    parser.add_argument("--k", type=int, default=None, help="number of retrieved rationales")
    parser.add_argument("--lambda", dest="lam", type=float, default=None,
                        help="temporal/semantic balance in [0,1]")
    parser.add_argument("--mode", default=None, help=f"inference mode, one of {ALL_MODES}")
    parser.add_argument("--retrieval-mode", dest="retrieval_mode", default=None,
                        help="hybrid|data-only|semantic-only|random")
    parser.add_argument("--include-chart-refs", action="store_true",
                        help="attach exemplar charts to rationale prompts")
    parser.add_argument("--include-labels", action="store_true",
                        help="append exemplar outcome meanings to rationale prompts")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--audit", action="store_true", help="snapshot rendered prompts")
    parser.add_argument("--work-dir", dest="work_dir", default=None)

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("ingest", help="window, label, split, and persist samples")
    sub.add_parser("build-base", help="generate rationales and embeddings")
    sub.add_parser("infer", help="run inference over the query set")
    eval_p = sub.add_parser("eval", help="score a finished run directory")
    eval_p.add_argument("--run-dir", default=None)
    sweep_p = sub.add_parser("sweep", help="grid over K and lambda")
    sweep_p.add_argument("--k-values", default=None, help="comma-separated K grid")
    sweep_p.add_argument("--lambda-values", default=None, help="comma-separated lambda grid")
    report_p = sub.add_parser("report", help="comparison table across run dirs")
    report_p.add_argument("--runs", required=True, help="comma-separated run directories")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig.from_args(args)
        if args.command == "ingest":
            return cmd_ingest(cfg)
        if args.command == "build-base":
            return cmd_build_base(cfg)
        if args.command == "infer":
            return cmd_infer(cfg)
        if args.command == "eval":
            return cmd_eval(cfg, args.run_dir)
        if args.command == "sweep":
            k_values = [int(v) for v in args.k_values.split(",")] if args.k_values else None
            lam_values = (
                [float(v) for v in args.lambda_values.split(",")] if args.lambda_values else None
            )
            return cmd_sweep(cfg, k_values, lam_values)
        if args.command == "report":
            return cmd_report(cfg, [d for d in args.runs.split(",") if d])
        parser.error(f"unknown command {args.command!r}")
    except (PipelineError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
