"""Label-conditioned rationale generation and the persisted rationale base.

For every labeled base sample, the generator model is shown the sample's
chart plus the true outcome and asked for hindsight reasoning paths in the
``Observation -> Implication`` bullet format. Replies that name the outcome
(or contain no bullets) are regenerated up to a budget, then kept with a
warning flag. The accepted rationales plus their aligned temporal and
semantic embedding matrices form the base used by retrieval.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .backend import Backend, ChatRequest, image_part, text_part
from .chart import ChartImage, data_url, render_chart, save_chart
from .data import Sample, TaskSpec
from .encoders import encode_text
from .errors import RationaleFormatError, StateError, TaskError, TransportError
from .prompts import RATIONALE_GENERATION, base_slots

logger = logging.getLogger(__name__)

BULLET_RE = re.compile(r"^\s*(?:[-*•●▪]|\d+[.)])\s+")
ARROW_RE = re.compile(r"\s*(?:->|→)\s*")

# Words too generic to betray an outcome on their own.
_MEANING_STOPWORDS = {
    "a", "an", "and", "as", "at", "be", "between", "by", "for", "i.e.,", "in",
    "more", "not", "of", "or", "over", "past", "than", "that", "the", "to",
    "will", "within", "hour", "hours", "day", "days",
}

LABEL_TOKEN_RES = (
    re.compile(r"\blabel(?:ed)?(?:\s+as)?\s*:?\s*\d+", re.IGNORECASE),
    re.compile(r"\bprediction\s*:?\s*\d+", re.IGNORECASE),
    re.compile(r"\boutcome\s*:?\s*\d+", re.IGNORECASE),
    re.compile(r"\bclass\s*:?\s*\d+", re.IGNORECASE),
)

REVISION_NOTE = (
    "Revision {attempt}: the previous answer mentioned the outcome or was not a "
    "bulleted list. Rewrite the bulleted list of 'Observation -> Implication' "
    "factors without mentioning the actual outcome or the final prediction."
)


@dataclass(frozen=True)
class ReasoningPath:
    observation: str
    implication: str

    def __post_init__(self):
        if not self.observation:
            raise RationaleFormatError("reasoning path with empty observation")


@dataclass(frozen=True)
class Rationale:
    sample_id: str
    label: int
    paths: tuple[ReasoningPath, ...]
    raw_text: str
    chart_ref: str | None = None  # kept for exemplar-chart inclusion runs
    leak_flag: bool = False  # True when kept despite residual violations

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "label": self.label,
            "paths": [[p.observation, p.implication] for p in self.paths],
            "raw_text": self.raw_text,
            "chart_ref": self.chart_ref,
            "leak_flag": self.leak_flag,
        }

    @classmethod
    def from_dict(cls, record: dict) -> "Rationale":
        return cls(
            sample_id=record["sample_id"],
            label=record["label"],
            paths=tuple(ReasoningPath(o, i) for o, i in record["paths"]),
            raw_text=record["raw_text"],
            chart_ref=record.get("chart_ref"),
            leak_flag=record.get("leak_flag", False),
        )


@dataclass(frozen=True)
class LeakViolation:
    start: int
    end: int
    matched: str
    kind: str  # "meaning-phrase" | "meaning-keyword" | "label-token"


def build_rationale_prompt(
    sample: Sample,
    task: TaskSpec,
    chart: ChartImage | None = None,
    model_id: str = "mock-chat",
    temperature: float = 0.7,
    max_tokens: int = 1024,
) -> ChatRequest:
    """Instantiate the generation template with the sample's true outcome."""
    if sample.label is None:
        raise TaskError(f"sample {sample.id} has no label; cannot condition the rationale")
    meaning = task.meaning_of(sample.label)
    slots = base_slots(task)
    system, user = RATIONALE_GENERATION.render(true_label_meaning=meaning, **slots)
    chart = chart or render_chart(sample)
    return ChatRequest(
        model_id=model_id,
        system_text=system,
        user_parts=(text_part(user), image_part(data_url(chart))),
        temperature=temperature,
        max_tokens=max_tokens,
    )


def parse_rationale(text: str) -> list[ReasoningPath]:
    """Split bulleted reply text into observation/implication pairs.

    Bullets may use ``-``, ``*``, unicode bullets, or ``1.`` numbering; a
    bullet runs until the next marker. A bullet without an arrow becomes an
    observation with an empty implication (logged, not fatal).
    """
    if not text:
        raise RationaleFormatError("empty rationale text")
    bullets: list[str] = []
    for line in text.splitlines():
        if BULLET_RE.match(line):
            bullets.append(BULLET_RE.sub("", line).strip())
        elif bullets and line.strip():
            bullets[-1] += " " + line.strip()
    if not bullets:
        raise RationaleFormatError("no bulleted reasoning paths found")
    paths = []
    for bullet in bullets:
        halves = ARROW_RE.split(bullet, maxsplit=1)
        if len(halves) == 2:
            paths.append(ReasoningPath(halves[0].strip(), halves[1].strip()))
        else:
            logger.warning("bullet without '->' arrow kept as bare observation: %r", bullet[:60])
            paths.append(ReasoningPath(bullet.strip(), ""))
    return paths


def _meaning_keywords(task: TaskSpec) -> set[str]:
    keywords = set()
    for meaning in task.class_meanings:
        for word in re.findall(r"[a-zA-Z]+", meaning.lower()):
            if word not in _MEANING_STOPWORDS:
                keywords.add(word)
    return keywords


def validate_no_leak(rationale_text: str, task: TaskSpec) -> list[LeakViolation]:
    """Scan for outcome disclosure: meaning phrases, their keywords, label tokens.

    The keyword pass is deliberately aggressive (any non-stopword word of a
    class meaning, e.g. ``increase``), trading false positives for zero
    false negatives; the regenerate-then-warn policy absorbs the cost.
    """
    violations: list[LeakViolation] = []
    lowered = rationale_text.lower()
    for meaning in task.class_meanings:
        needle = meaning.lower()
        start = 0
        while True:
            pos = lowered.find(needle, start)
            if pos < 0:
                break
            violations.append(
                LeakViolation(pos, pos + len(needle), rationale_text[pos : pos + len(needle)],
                              "meaning-phrase")
            )
            start = pos + 1
    phrase_spans = [(v.start, v.end) for v in violations]
    for keyword in sorted(_meaning_keywords(task)):
        for match in re.finditer(rf"\b{re.escape(keyword)}\w*", lowered):
            if any(s <= match.start() < e for s, e in phrase_spans):
                continue  # already reported as part of a full phrase
            violations.append(
                LeakViolation(match.start(), match.end(), rationale_text[match.start():match.end()],
                              "meaning-keyword")
            )
    for pattern in LABEL_TOKEN_RES:
        for match in pattern.finditer(rationale_text):
            violations.append(
                LeakViolation(match.start(), match.end(), match.group(0), "label-token")
            )
    return sorted(violations, key=lambda v: (v.start, v.end))


class RationaleBase:
    """Rationales plus aligned temporal/semantic embedding matrices.

    Row ``i`` of both matrices belongs to ``rationales[i]``; the alignment
    is by construction and revalidated on load.
    """

    def __init__(
        self,
        rationales: list[Rationale],
        temporal_embeddings: np.ndarray,
        semantic_embeddings: np.ndarray,
        manifest: dict,
    ):
        count = len(rationales)
        if temporal_embeddings.shape[0] != count or semantic_embeddings.shape[0] != count:
            raise StateError("embedding row counts do not match rationale count")
        self.rationales = list(rationales)
        self.temporal_embeddings = np.asarray(temporal_embeddings, dtype=np.float32)
        self.semantic_embeddings = np.asarray(semantic_embeddings, dtype=np.float32)
        self.manifest = dict(manifest)
        self._by_id = {r.sample_id: r for r in self.rationales}

    def __len__(self) -> int:
        return len(self.rationales)

    def sample_ids(self) -> list[str]:
        return [r.sample_id for r in self.rationales]

    def labels(self) -> dict[str, int]:
        return {r.sample_id: r.label for r in self.rationales}

    def temporal_matrix(self) -> np.ndarray:
        return self.temporal_embeddings

    def semantic_matrix(self) -> np.ndarray:
        return self.semantic_embeddings

    def get(self, sample_id: str) -> Rationale:
        try:
            return self._by_id[sample_id]
        except KeyError:
            raise StateError(f"no rationale for sample {sample_id!r}") from None

    def content_digest(self) -> str:
        """Digest over rationale records and matrix bytes (manifest excluded,
        so resumed and uninterrupted builds of the same inputs agree)."""
        hasher = hashlib.sha256()
        for rationale in self.rationales:
            hasher.update(json.dumps(rationale.to_dict(), sort_keys=True).encode("utf-8"))
        hasher.update(np.ascontiguousarray(self.temporal_embeddings).tobytes())
        hasher.update(np.ascontiguousarray(self.semantic_embeddings).tobytes())
        return hasher.hexdigest()

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        rationale_lines = "".join(
            json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in self.rationales
        ).encode("utf-8")
        h_b = np.ascontiguousarray(self.temporal_embeddings, dtype="<f4").tobytes()
        h_s = np.ascontiguousarray(self.semantic_embeddings, dtype="<f4").tobytes()
        (directory / "rationales").write_bytes(rationale_lines)
        (directory / "H_b.bin").write_bytes(h_b)
        (directory / "H_s.bin").write_bytes(h_s)
        manifest = dict(self.manifest)
        manifest.update(
            {
                "count": len(self.rationales),
                "temporal_dim": int(self.temporal_embeddings.shape[1]) if len(self) else 0,
                "semantic_dim": int(self.semantic_embeddings.shape[1]) if len(self) else 0,
                "digests": {
                    "rationales": hashlib.sha256(rationale_lines).hexdigest(),
                    "H_b.bin": hashlib.sha256(h_b).hexdigest(),
                    "H_s.bin": hashlib.sha256(h_s).hexdigest(),
                },
            }
        )
        (directory / "manifest").write_text(
            json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8"
        )
        self.manifest = manifest

    @classmethod
    def load(cls, directory: str | Path) -> "RationaleBase":
        directory = Path(directory)
        manifest = json.loads((directory / "manifest").read_text(encoding="utf-8"))
        rationales = [
            Rationale.from_dict(json.loads(line))
            for line in (directory / "rationales").read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
        count = manifest["count"]
        t_dim, s_dim = manifest["temporal_dim"], manifest["semantic_dim"]
        temporal = np.frombuffer((directory / "H_b.bin").read_bytes(), dtype="<f4")
        semantic = np.frombuffer((directory / "H_s.bin").read_bytes(), dtype="<f4")
        temporal = temporal.reshape(count, t_dim) if count else temporal.reshape(0, 0)
        semantic = semantic.reshape(count, s_dim) if count else semantic.reshape(0, 0)
        return cls(rationales, temporal.copy(), semantic.copy(), manifest)


@dataclass
class BuildPolicy:
    max_regen: int = 1
    model_id: str = "mock-chat"
    temperature: float = 0.7
    max_tokens: int = 1024


def _generate_one(
    sample: Sample,
    task: TaskSpec,
    backend: Backend,
    policy: BuildPolicy,
    chart: ChartImage,
) -> Rationale:
    request = build_rationale_prompt(
        sample, task, chart, policy.model_id, policy.temperature, policy.max_tokens
    )
    attempt = 0
    while True:
        response = backend.chat(request)
        try:
            paths = parse_rationale(response.text)
            violations = validate_no_leak(response.text, task)
        except RationaleFormatError:
            paths, violations = None, []
        if paths is not None and not violations:
            return Rationale(sample.id, sample.label, tuple(paths), response.text)
        attempt += 1
        if attempt > policy.max_regen:
            if paths is None:
                raise RationaleFormatError(
                    f"sample {sample.id}: no parseable bullets after {attempt} attempts"
                )
            logger.warning(
                "sample %s: %d leak violations remain after %d attempts; kept with flag",
                sample.id, len(violations), attempt,
            )
            return Rationale(
                sample.id, sample.label, tuple(paths), response.text, leak_flag=True
            )
        # A fresh digest per attempt keeps the retry out of the response cache.
        request = replace(
            request,
            user_parts=request.user_parts + (text_part(REVISION_NOTE.format(attempt=attempt)),),
        )


def build_base(
    base_samples: list[Sample],
    task: TaskSpec,
    generator: Backend,
    embedder: Backend,
    temporal_encoder,
    policy: BuildPolicy | None = None,
    base_dir: str | Path | None = None,
    chart_dir: str | Path | None = None,
) -> RationaleBase:
    """Generate, embed, and persist rationales for every labeled sample.

    Progress checkpoints one JSON line per finished sample, so an aborted
    build resumes by sample id and converges to the same content digest as
    an uninterrupted run.
    """
    policy = policy or BuildPolicy()
    for sample in base_samples:
        if sample.label is None:
            raise TaskError(f"sample {sample.id} is unlabeled; base samples need labels")

    base_dir = Path(base_dir) if base_dir else None
    partial_path = base_dir / "build.partial" if base_dir else None
    done: dict[str, dict] = {}
    if partial_path and partial_path.exists():
        for line in partial_path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                record = json.loads(line)
                done[record["rationale"]["sample_id"]] = record
        logger.info("resuming base build: %d/%d samples done", len(done), len(base_samples))

    records: list[dict] = []
    try:
        for sample in base_samples:
            if sample.id in done:
                records.append(done[sample.id])
                continue
            chart = render_chart(sample)
            chart_ref = save_chart(chart, chart_dir) if chart_dir else None
            rationale = _generate_one(sample, task, generator, policy, chart)
            if chart_ref:
                rationale = replace(rationale, chart_ref=chart_ref)
            temporal = temporal_encoder.encode(sample)
            semantic = encode_text(rationale.raw_text, embedder)
            record = {
                "rationale": rationale.to_dict(),
                "temporal": [float(v) for v in temporal.values],
                "semantic": [float(v) for v in semantic.values],
                "temporal_encoder_id": temporal.encoder_id,
                "semantic_encoder_id": semantic.encoder_id,
            }
            records.append(record)
            if partial_path:
                partial_path.parent.mkdir(parents=True, exist_ok=True)
                with partial_path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record, sort_keys=True) + "\n")
    except TransportError:
        logger.error(
            "base build aborted by transport failure; %d/%d samples checkpointed",
            len(records), len(base_samples),
        )
        raise

    rationales = [Rationale.from_dict(r["rationale"]) for r in records]
    temporal_rows = np.array([r["temporal"] for r in records], dtype=np.float32)
    semantic_rows = np.array([r["semantic"] for r in records], dtype=np.float32)
    manifest = {
        "task": task.name,
        "temporal_encoder_id": records[0]["temporal_encoder_id"] if records else "",
        "semantic_encoder_id": records[0]["semantic_encoder_id"] if records else "",
        "created_at": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
    }
    base = RationaleBase(rationales, temporal_rows, semantic_rows, manifest)
    if base_dir:
        base.save(base_dir)
        if partial_path and partial_path.exists():
            partial_path.unlink()
    return base
