"""Estimator-style facade over the whole pipeline.

``fit`` builds (or loads) the rationale base from labeled windows;
``predict`` runs retrieval-grounded inference on query windows. Parameters
follow sklearn conventions (stored verbatim in ``__init__``, fitted state
on ``self.base_``), so the classifier works with ``get_params``/``clone``
and composes with the wider ecosystem.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .backend import Backend, BackendConfig, make_backend
from .data import TaskSpec
from .encoders import make_temporal_encoder
from .errors import StateError
from .evaluate import RunArtifacts, run_queries
from .inference import AblationFlags, InferenceParams
from .rationale import BuildPolicy, RationaleBase, build_base
from .validation import check_samples


class RationaleGroundedClassifier(BaseEstimator, ClassifierMixin):
    """Trend classifier backed by rationale retrieval and a predictor model.

    All model traffic goes through the configured role backends, so with
    mock backends the classifier is fully offline and deterministic.
    """

    def __init__(
        self,
        task: TaskSpec | None = None,
        generator: Backend | None = None,
        summarizer: Backend | None = None,
        predictor: Backend | None = None,
        embedder: Backend | None = None,
        encoder: str = "builtin-stats",
        encoder_url: str | None = None,
        k: int = 5,
        lam: float = 0.8,
        retrieval_mode: str = "hybrid",
        include_chart_refs: bool = False,
        include_labels: bool = False,
        seed: int = 0,
        max_regen: int = 1,
        fallback_label: int | None = None,
        base_dir: str | None = None,
        chart_dir: str | None = None,
        generator_model: str = "mock-chat",
        predictor_model: str = "mock-chat",
        summary_model: str = "mock-chat",
    ):
        self.task = task
        self.generator = generator
        self.summarizer = summarizer
        self.predictor = predictor
        self.embedder = embedder
        self.encoder = encoder
        self.encoder_url = encoder_url
        self.k = k
        self.lam = lam
        self.retrieval_mode = retrieval_mode
        self.include_chart_refs = include_chart_refs
        self.include_labels = include_labels
        self.seed = seed
        self.max_regen = max_regen
        self.fallback_label = fallback_label
        self.base_dir = base_dir
        self.chart_dir = chart_dir
        self.generator_model = generator_model
        self.predictor_model = predictor_model
        self.summary_model = summary_model

    def _backend(self, role: str) -> Backend:
        configured = getattr(self, role)
        if configured is not None:
            return configured
        return make_backend(BackendConfig(kind="mock"))

    def _encoder(self):
        return make_temporal_encoder(self.encoder, self.encoder_url)

    def fit(self, X, y=None):
        """Build the rationale base from labeled windows.

        ``X`` is a list of labeled :class:`Sample`; ``y`` optionally
        overrides their labels (sklearn calling convention).
        """
        if self.task is None:
            raise StateError("classifier needs a task")
        samples = list(X)
        if y is not None:
            from dataclasses import replace

            samples = [replace(s, label=int(label)) for s, label in zip(samples, y)]
        samples = check_samples(samples, self.task, require_labels=True)
        policy = BuildPolicy(
            max_regen=self.max_regen,
            model_id=self.generator_model,
        )
        self.base_ = build_base(
            samples,
            self.task,
            self._backend("generator"),
            self._backend("embedder"),
            self._encoder(),
            policy=policy,
            base_dir=self.base_dir,
            chart_dir=self.chart_dir,
        )
        labels = [s.label for s in samples]
        self.classes_ = np.unique(labels)
        self.fallback_label_ = (
            self.fallback_label
            if self.fallback_label is not None
            else int(np.bincount(labels).argmax())
        )
        return self

    def load_base(self, base_dir: str) -> "RationaleGroundedClassifier":
        """Attach a previously persisted base instead of refitting."""
        self.base_ = RationaleBase.load(base_dir)
        labels = list(self.base_.labels().values())
        self.classes_ = np.unique(labels)
        self.fallback_label_ = (
            self.fallback_label
            if self.fallback_label is not None
            else int(np.bincount(labels).argmax())
        )
        return self

    def _params(self) -> InferenceParams:
        return InferenceParams(
            k=self.k,
            lam=self.lam,
            mode="rationale-grounded",
            retrieval_mode=self.retrieval_mode,
            flags=AblationFlags(
                include_chart_refs=self.include_chart_refs,
                include_labels=self.include_labels,
            ),
            seed=self.seed,
            fallback_label=self.fallback_label_,
            model_id=self.predictor_model,
            summary_model_id=self.summary_model,
        )

    def predict_records(self, X, run_dir=None, audit: bool = False) -> RunArtifacts:
        if not hasattr(self, "base_"):
            raise StateError("classifier is not fitted; call fit or load_base first")
        queries = check_samples(list(X), self.task)
        return run_queries(
            queries,
            self.base_,
            self._params(),
            self.task,
            self._backend("summarizer"),
            self._backend("predictor"),
            self._backend("embedder"),
            self._encoder(),
            run_dir=run_dir,
            audit=audit,
        )

    def predict(self, X) -> np.ndarray:
        artifacts = self.predict_records(X)
        return np.array([r.prediction for r in artifacts.records], dtype=np.int64)
