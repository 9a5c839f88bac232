"""Rationale-grounded in-context inference for windowed time series."""

from .backend import (
    BackendConfig,
    ChatRequest,
    ChatResponse,
    HttpBackend,
    MockBackend,
    MockRule,
    make_backend,
)
from .chart import ChartImage, ChartStyle, encode_for_transport, render_chart
from .data import (
    ColumnSchema,
    Sample,
    SeriesTable,
    TaskSpec,
    derive_label,
    load_dataset,
    split,
    window_samples,
)
from .encoders import (
    EmbeddingVector,
    RemoteTemporalEncoder,
    TabularMatrix,
    TemporalStatsEncoder,
    encode_temporal,
    encode_text,
    tabularize,
)
from .evaluate import ConfusionMatrix, EvalReport, auc_ovr, evaluate_records, macro_f1, sweep
from .inference import (
    AblationFlags,
    InferenceParams,
    InferenceRecord,
    Summary,
    build_inference_prompt,
    infer,
    parse_prediction,
    summarize,
)
from .pipeline import RationaleGroundedClassifier
from .rationale import (
    Rationale,
    RationaleBase,
    ReasoningPath,
    build_base,
    build_rationale_prompt,
    parse_rationale,
    validate_no_leak,
)
from .retrieval import (
    HybridRationaleRetriever,
    RetrievalSet,
    ScoredRationale,
    cosine,
    hit_rate,
    hybrid_top_k,
)
from .tasks import BUILTIN_TASKS, FINANCE, POWER, TRAFFIC, get_task

__version__ = "0.1.0"

__all__ = [
    "AblationFlags",
    "BackendConfig",
    "BUILTIN_TASKS",
    "ChartImage",
    "ChartStyle",
    "ChatRequest",
    "ChatResponse",
    "ColumnSchema",
    "ConfusionMatrix",
    "EmbeddingVector",
    "EvalReport",
    "FINANCE",
    "HttpBackend",
    "HybridRationaleRetriever",
    "InferenceParams",
    "InferenceRecord",
    "MockBackend",
    "MockRule",
    "POWER",
    "Rationale",
    "RationaleBase",
    "RationaleGroundedClassifier",
    "ReasoningPath",
    "RemoteTemporalEncoder",
    "RetrievalSet",
    "Sample",
    "ScoredRationale",
    "SeriesTable",
    "Summary",
    "TabularMatrix",
    "TaskSpec",
    "TemporalStatsEncoder",
    "TRAFFIC",
    "auc_ovr",
    "build_base",
    "build_inference_prompt",
    "build_rationale_prompt",
    "cosine",
    "derive_label",
    "encode_for_transport",
    "encode_temporal",
    "encode_text",
    "evaluate_records",
    "get_task",
    "hit_rate",
    "hybrid_top_k",
    "infer",
    "load_dataset",
    "macro_f1",
    "make_backend",
    "parse_prediction",
    "parse_rationale",
    "render_chart",
    "split",
    "summarize",
    "sweep",
    "tabularize",
    "validate_no_leak",
    "window_samples",
]
