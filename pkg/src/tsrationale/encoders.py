"""Temporal and semantic embedding spaces.

Temporal vectors come either from the builtin statistical encoder (self
contained, deterministic) or from the remote tabular-encoder service that
shares the same wire contract. Semantic vectors delegate to the backend's
text-embedding endpoint. All vectors are L2-normalized at encode time so
that downstream cosine reduces to a dot product.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import requests
from sklearn.base import BaseEstimator, TransformerMixin

from .data import Sample
from .errors import PipelineError, RequestError, TransportError

BUILTIN_ENCODER_ID = "stats-v1"
FEATURES_PER_VARIABLE = 8


@dataclass(frozen=True)
class TabularMatrix:
    """A sample window reorganized as a plain table (rows = time steps)."""

    values: np.ndarray  # (T, N)
    column_names: tuple[str, ...]

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[1] != len(self.column_names):
            raise PipelineError("tabular matrix shape inconsistent with column names")

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class EmbeddingVector:
    values: np.ndarray
    space: str  # "temporal" | "semantic"
    encoder_id: str

    def __post_init__(self):
        if self.space not in ("temporal", "semantic"):
            raise PipelineError(f"unknown embedding space {self.space!r}")
        if not np.isfinite(self.values).all():
            raise PipelineError("embedding has non-finite entries")

    @property
    def dim(self) -> int:
        return len(self.values)


def tabularize(sample: Sample) -> TabularMatrix:
    """Identity reshaping: columns are variables, rows are time steps."""
    return TabularMatrix(values=sample.window.copy(), column_names=sample.variable_names)


def _l2_normalize(vector: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vector))
    if norm <= 1e-12:
        return np.zeros_like(vector)
    return vector / norm


def builtin_dimension(n_variables: int) -> int:
    """Per-variable features plus the correlation upper triangle."""
    return n_variables * FEATURES_PER_VARIABLE + n_variables * (n_variables - 1) // 2


def _variable_features(column: np.ndarray) -> np.ndarray:
    """Eight summary features of one z-normalized variable.

    Zero-variance columns z-normalize to all zeros, so every feature
    degenerates to 0 rather than NaN.
    """
    std = float(np.std(column))
    if std <= 1e-12:
        z = np.zeros_like(column)
    else:
        z = (column - float(np.mean(column))) / std
    t = len(z)
    if t >= 2 and std > 1e-12:
        slope = float(np.polyfit(np.arange(t), z, 1)[0])
        head, tail = z[:-1], z[1:]
        hs, ts = float(np.std(head)), float(np.std(tail))
        if hs > 1e-12 and ts > 1e-12:
            lag1 = float(np.mean((head - head.mean()) * (tail - tail.mean())) / (hs * ts))
        else:
            lag1 = 0.0
    else:
        slope = 0.0
        lag1 = 0.0
    return np.array(
        [
            float(np.mean(z)),
            float(np.std(z)),
            float(np.min(z)),
            float(np.max(z)),
            float(z[0]),
            float(z[-1]),
            slope,
            lag1,
        ]
    )


def _correlation_upper_triangle(values: np.ndarray) -> np.ndarray:
    t, n = values.shape
    if n < 2:
        return np.zeros(0)
    stds = np.std(values, axis=0)
    entries = []
    for i in range(n):
        for j in range(i + 1, n):
            if t < 2 or stds[i] <= 1e-12 or stds[j] <= 1e-12:
                entries.append(0.0)
            else:
                xi = values[:, i] - values[:, i].mean()
                xj = values[:, j] - values[:, j].mean()
                entries.append(float(np.mean(xi * xj) / (stds[i] * stds[j])))
    return np.array(entries)


def builtin_temporal_features(matrix: TabularMatrix) -> np.ndarray:
    """Raw (un-normalized) builtin feature vector for one window."""
    values = matrix.values
    if not np.isfinite(values).all():
        raise PipelineError("temporal encoding requires finite values")
    parts = [_variable_features(values[:, j]) for j in range(values.shape[1])]
    parts.append(_correlation_upper_triangle(values))
    return np.concatenate(parts)


class TemporalStatsEncoder(BaseEstimator, TransformerMixin):
    """Stateless sklearn-style transformer over window matrices.

    ``transform`` accepts a list of :class:`Sample` or :class:`TabularMatrix`
    (or raw 2-D arrays) and returns one unit-norm row per input.
    """

    encoder_id = BUILTIN_ENCODER_ID

    def fit(self, X, y=None):
        return self

    def transform(self, X) -> np.ndarray:
        rows = [self.encode(item).values for item in X]
        return np.vstack(rows) if rows else np.zeros((0, 0))

    def encode(self, item) -> EmbeddingVector:
        if isinstance(item, Sample):
            matrix = tabularize(item)
        elif isinstance(item, TabularMatrix):
            matrix = item
        else:
            arr = np.asarray(item, dtype=np.float64)
            matrix = TabularMatrix(arr, tuple(f"v{i}" for i in range(arr.shape[1])))
        features = builtin_temporal_features(matrix)
        return EmbeddingVector(
            values=_l2_normalize(features), space="temporal", encoder_id=self.encoder_id
        )


class RemoteTemporalEncoder:
    """Client for the tabular-encoder service sharing the builtin contract."""

    def __init__(self, service_url: str, timeout_s: float = 60.0):
        self.service_url = service_url.rstrip("/")
        self.timeout_s = timeout_s
        self._encoder_id: str | None = None

    @property
    def encoder_id(self) -> str:
        return self._encoder_id or "remote-pending"

    def encode(self, item) -> EmbeddingVector:
        matrix = tabularize(item) if isinstance(item, Sample) else item
        body = {
            "matrix": [[float(v) for v in row] for row in matrix.values],
            "columns": list(matrix.column_names),
        }
        try:
            resp = requests.post(f"{self.service_url}/embed", json=body, timeout=self.timeout_s)
        except (requests.ConnectionError, requests.Timeout) as exc:
            raise TransportError(f"temporal encoder service unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise RequestError(
                f"temporal encoder service returned {resp.status_code}: {resp.text[:300]}"
            )
        payload = resp.json()
        self._encoder_id = payload.get("encoder_id", "remote")
        vector = np.asarray(payload["vector"], dtype=np.float64)
        return EmbeddingVector(
            values=_l2_normalize(vector), space="temporal", encoder_id=self.encoder_id
        )


def make_temporal_encoder(which: str = "builtin-stats", service_url: str | None = None):
    if which == "builtin-stats":
        return TemporalStatsEncoder()
    if which == "remote-service":
        if not service_url:
            raise PipelineError("remote-service encoder requires a service url")
        return RemoteTemporalEncoder(service_url)
    raise PipelineError(f"unknown temporal encoder {which!r}")


def encode_temporal(matrix: TabularMatrix, which: str = "builtin-stats",
                    service_url: str | None = None) -> EmbeddingVector:
    return make_temporal_encoder(which, service_url).encode(matrix)


def encode_text(text: str, backend) -> EmbeddingVector:
    """Semantic embedding of rationale or summary text, unit-normalized."""
    if not text:
        raise PipelineError("cannot embed empty text")
    raw = np.asarray(backend.embed_text(text), dtype=np.float64)
    return EmbeddingVector(
        values=_l2_normalize(raw),
        space="semantic",
        encoder_id=backend.cfg.embed_model,
    )
