"""Hybrid similarity scoring and top-K rationale selection.

Every base rationale is scored in both spaces, the two cosines are fused
with the balancing weight ``lam`` (``lam * temporal + (1 - lam) * semantic``)
and the K best survive. The scan is exhaustive: base sizes here are around
a thousand rows, so exactness is worth more than an index.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from .encoders import EmbeddingVector
from .errors import ConsistencyError, ParameterError, PipelineError, StateError

MODES = ("hybrid", "data-only", "semantic-only", "random")


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Standard cosine similarity, clamped to [-1, 1] against rounding."""
    if a.space != b.space:
        raise PipelineError(f"cannot compare {a.space} with {b.space} embeddings")
    if a.dim != b.dim:
        raise PipelineError(f"dimension mismatch: {a.dim} vs {b.dim}")
    na, nb = float(np.linalg.norm(a.values)), float(np.linalg.norm(b.values))
    if na <= 1e-12 or nb <= 1e-12:
        raise ParameterError("cosine undefined for zero-norm embedding")
    value = float(np.dot(a.values, b.values) / (na * nb))
    return max(-1.0, min(1.0, value))


@dataclass(frozen=True)
class ScoredRationale:
    sample_id: str
    sim_b: float
    sim_s: float
    sim_final: float


@dataclass(frozen=True)
class RetrievalSet:
    query_id: str
    entries: tuple[ScoredRationale, ...]
    k: int
    lam: float
    mode: str = "hybrid"

    def ids(self) -> list[str]:
        return [entry.sample_id for entry in self.entries]


def _pairwise_sims(matrix: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Cosines of a unit-norm row matrix against one query vector."""
    qn = float(np.linalg.norm(query))
    if qn <= 1e-12:
        raise ParameterError("query embedding has zero norm")
    row_norms = np.linalg.norm(matrix, axis=1)
    safe = np.where(row_norms > 1e-12, row_norms, 1.0)
    sims = matrix @ (query / qn) / safe
    sims[row_norms <= 1e-12] = 0.0
    return np.clip(sims, -1.0, 1.0)


def hybrid_top_k(
    query_temporal: EmbeddingVector,
    query_semantic: EmbeddingVector,
    base,
    k: int,
    lam: float,
    mode: str = "hybrid",
    seed: int | None = None,
    query_id: str = "query",
    exclude_ids: set[str] | None = None,
) -> RetrievalSet:
    """Score all base rationales, fuse, and keep the K best.

    Ties in the fused score break toward the lower base index so the
    ordering is total and oracle-checkable. ``data-only`` and
    ``semantic-only`` force ``lam`` to 1 and 0; ``random`` draws a uniform
    K-subset from the seeded generator and reports its true scores.
    """
    ids = base.sample_ids()
    count = len(ids)
    if count == 0:
        raise StateError("rationale base is empty")
    if mode not in MODES:
        raise ParameterError(f"unknown retrieval mode {mode!r} (one of {MODES})")
    if not 0.0 <= lam <= 1.0:
        raise ParameterError(f"lambda must lie in [0, 1], got {lam}")

    keep = np.ones(count, dtype=bool)
    if exclude_ids:
        keep = np.array([sid not in exclude_ids for sid in ids])
    available = int(keep.sum())
    if k < 1 or k > available:
        raise ParameterError(f"k={k} outside [1, {available}] candidates")

    effective_lam = {"data-only": 1.0, "semantic-only": 0.0}.get(mode, lam)
    sim_b = _pairwise_sims(base.temporal_matrix(), query_temporal.values)
    sim_s = _pairwise_sims(base.semantic_matrix(), query_semantic.values)
    sim_final = effective_lam * sim_b + (1.0 - effective_lam) * sim_s

    candidates = np.flatnonzero(keep)
    if mode == "random":
        if seed is None:
            raise ParameterError("random mode requires a seed")
        rng = np.random.default_rng(seed)
        chosen = rng.choice(candidates, size=k, replace=False)
        picked = sorted(chosen, key=lambda i: (-sim_final[i], i))
    else:
        picked = sorted(candidates, key=lambda i: (-sim_final[i], i))[:k]

    entries = tuple(
        ScoredRationale(
            sample_id=ids[i],
            sim_b=float(sim_b[i]),
            sim_s=float(sim_s[i]),
            sim_final=float(sim_final[i]),
        )
        for i in picked
    )
    return RetrievalSet(query_id=query_id, entries=entries, k=k, lam=effective_lam, mode=mode)


class HybridRationaleRetriever(BaseEstimator):
    """Estimator-style wrapper: fit on a rationale base, then retrieve.

    Keeps the fusion parameters as constructor arguments so the retriever
    composes with grid-search style tooling via ``get_params``.
    """

    def __init__(self, k: int = 5, lam: float = 0.8, mode: str = "hybrid",
                 seed: int | None = None, allow_self_match: bool = False):
        self.k = k
        self.lam = lam
        self.mode = mode
        self.seed = seed
        self.allow_self_match = allow_self_match

    def fit(self, base, y=None):
        if len(base.sample_ids()) == 0:
            raise StateError("cannot fit retriever on an empty base")
        self.base_ = base
        return self

    def retrieve(
        self,
        query_temporal: EmbeddingVector,
        query_semantic: EmbeddingVector,
        query_id: str = "query",
    ) -> RetrievalSet:
        if not hasattr(self, "base_"):
            raise StateError("retriever is not fitted")
        exclude = None
        if not self.allow_self_match and query_id in set(self.base_.sample_ids()):
            exclude = {query_id}
        return hybrid_top_k(
            query_temporal,
            query_semantic,
            self.base_,
            k=self.k,
            lam=self.lam,
            mode=self.mode,
            seed=self.seed,
            query_id=query_id,
            exclude_ids=exclude,
        )


def hit_rate(
    retrievals: list[RetrievalSet],
    base_labels: dict[str, int],
    query_labels: dict[str, int],
) -> float:
    """Fraction of queries with at least one retrieved label match."""
    if not retrievals:
        raise ParameterError("hit_rate needs at least one retrieval set")
    hits = 0
    for retrieval in retrievals:
        if retrieval.query_id not in query_labels:
            raise ConsistencyError(f"query {retrieval.query_id!r} missing from query labels")
        want = query_labels[retrieval.query_id]
        for entry in retrieval.entries:
            if entry.sample_id not in base_labels:
                raise ConsistencyError(f"retrieved id {entry.sample_id!r} missing from base labels")
            if base_labels[entry.sample_id] == want:
                hits += 1
                break
    return hits / len(retrievals)


def append_audit_line(path: str | Path, retrieval: RetrievalSet) -> None:
    """One audit record per query for sweep tooling and case studies."""
    record = {
        "query_id": retrieval.query_id,
        "k": retrieval.k,
        "lambda": retrieval.lam,
        "mode": retrieval.mode,
        "entries": [
            {
                "id": e.sample_id,
                "sim_b": round(e.sim_b, 10),
                "sim_s": round(e.sim_s, 10),
                "sim_final": round(e.sim_final, 10),
            }
            for e in retrieval.entries
        ],
    }
    with Path(path).open("a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, sort_keys=True) + "\n")
