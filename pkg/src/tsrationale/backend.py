"""Uniform chat-completion and text-embedding client with an offline mode.

Three layers:

* :class:`HttpBackend` speaks the common chat-completions wire dialect
  (``POST <base_url>/chat/completions`` and ``POST <base_url>/embeddings``).
* :class:`MockBackend` answers deterministically from scripted rules, a
  replay ledger, or built-in digest-driven behaviors, so the whole pipeline
  runs bit-reproducibly with zero network I/O.
* Both share a digest-keyed disk cache: the digest is a pure function of the
  full request (image bytes included), and a hit returns the byte-identical
  stored response.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import requests

from .errors import PipelineError, ReplayMissError, RequestError, TransportError

MOCK_IMAGE_TOKENS = 512  # flat per-image charge in the mock token accounting


def text_part(text: str) -> dict:
    return {"type": "text", "text": text}


def image_part(data_url: str) -> dict:
    return {"type": "image", "data_url": data_url}


@dataclass(frozen=True)
class ChatRequest:
    model_id: str
    system_text: str
    user_parts: tuple[dict, ...]
    temperature: float = 0.0
    max_tokens: int = 1024

    def __post_init__(self):
        object.__setattr__(self, "user_parts", tuple(self.user_parts))
        if not self.user_parts:
            raise PipelineError("chat request needs at least one user part")
        if self.temperature < 0:
            raise PipelineError("temperature must be >= 0")

    def text_content(self) -> str:
        """All text parts joined; what mock rules match against."""
        texts = [p["text"] for p in self.user_parts if p["type"] == "text"]
        return "\n".join([self.system_text, *texts])

    def image_count(self) -> int:
        return sum(1 for p in self.user_parts if p["type"] == "image")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    prompt_tokens: int
    completion_tokens: int
    latency_ms: float = 0.0

    def __post_init__(self):
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise PipelineError("token counts must be >= 0")


@dataclass
class BackendConfig:
    kind: str = "mock"  # "http" | "mock"
    base_url: str = ""
    api_key_env_var: str = ""
    model: str = "mock-chat"
    embed_model: str = "mock-embed"
    retry_limit: int = 2
    cache_dir: str | None = None
    timeout_s: float = 60.0
    requests_per_minute: float = 0.0  # 0 disables pacing
    max_in_flight: int = 4
    mock_embed_dim: int = 256
    replay_path: str | None = None
    strict_replay: bool = False  # mock: error instead of built-in fallback

    def __post_init__(self):
        if self.kind not in ("http", "mock"):
            raise PipelineError(f"unknown backend kind {self.kind!r}")
        if self.kind == "http" and not self.base_url:
            raise PipelineError("http backend requires base_url")


def request_digest(request: ChatRequest) -> str:
    """Stable hash over the canonicalized request, image payloads included."""
    canonical = json.dumps(
        {
            "model": request.model_id,
            "system": request.system_text,
            "parts": list(request.user_parts),
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        },
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def embed_digest(text: str, model: str) -> str:
    canonical = json.dumps({"op": "embed", "model": model, "text": text}, sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class ResponseCache:
    """Digest-keyed file cache; writes are temp-then-rename atomic."""

    def __init__(self, cache_dir: str | Path):
        self.root = Path(cache_dir)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, digest: str) -> Path:
        return self.root / f"{digest}.json"

    def get(self, digest: str) -> dict | None:
        path = self._path(digest)
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def put(self, digest: str, payload: dict) -> None:
        path = self._path(digest)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")
        os.replace(tmp, path)


class _TokenBucket:
    def __init__(self, per_minute: float):
        self.interval = 60.0 / per_minute if per_minute > 0 else 0.0
        self._next_at = 0.0
        self._lock = threading.Lock()

    def acquire(self) -> None:
        if self.interval <= 0:
            return
        with self._lock:
            now = time.monotonic()
            wait = self._next_at - now
            self._next_at = max(now, self._next_at) + self.interval
        if wait > 0:
            time.sleep(wait)


class Backend:
    """Shared caching/pacing shell; subclasses implement the raw calls."""

    def __init__(self, cfg: BackendConfig):
        self.cfg = cfg
        self.cache = ResponseCache(cfg.cache_dir) if cfg.cache_dir else None
        self._bucket = _TokenBucket(cfg.requests_per_minute)
        self._slots = threading.Semaphore(max(cfg.max_in_flight, 1))

    def __deepcopy__(self, memo):
        # Locks and semaphores do not copy; rebuild from config instead,
        # which keeps backends usable as estimator parameters under clone().
        return type(self)(copy.deepcopy(self.cfg, memo))

    def chat(self, request: ChatRequest) -> ChatResponse:
        digest = request_digest(request)
        if self.cache is not None:
            hit = self.cache.get(digest)
            if hit is not None:
                return ChatResponse(**hit)
        with self._slots:
            self._bucket.acquire()
            response = self._chat_impl(request, digest)
        if self.cache is not None:
            self.cache.put(digest, response.__dict__)
        return response

    def embed_text(self, text: str) -> list[float]:
        if not text:
            raise PipelineError("cannot embed empty text")
        digest = embed_digest(text, self.cfg.embed_model)
        if self.cache is not None:
            hit = self.cache.get(digest)
            if hit is not None:
                return list(hit["vector"])
        with self._slots:
            self._bucket.acquire()
            vector = self._embed_impl(text, digest)
        if self.cache is not None:
            self.cache.put(digest, {"vector": vector})
        return vector

    def _chat_impl(self, request: ChatRequest, digest: str) -> ChatResponse:
        raise NotImplementedError

    def _embed_impl(self, text: str, digest: str) -> list[float]:
        raise NotImplementedError


@dataclass
class MockRule:
    """Scripted reply: fires when `contains` (or regex `pattern`) matches.

    ``responses`` are consumed in call order and the last one repeats, which
    scripts retry flows (e.g. a leaky reply followed by a clean one).
    """

    responses: list[str]
    contains: str = ""
    pattern: str = ""
    _cursor: int = field(default=0, repr=False)

    def matches(self, content: str) -> bool:
        if self.contains and self.contains in content:
            return True
        return bool(self.pattern and re.search(self.pattern, content))

    def next_response(self) -> str:
        reply = self.responses[min(self._cursor, len(self.responses) - 1)]
        self._cursor += 1
        return reply


# Phrasing pools for the built-in mock behaviors. Deliberately free of the
# trend words the leak scanner looks for (increase/decrease/stable/...).
_MOCK_MOVES = (
    "climbs steadily",
    "drifts lower",
    "holds flat",
    "oscillates around its mean",
    "spikes near the end",
    "tapers off after a peak",
)
_MOCK_EFFECTS = (
    "adds upward pressure on the target",
    "points to softer readings ahead",
    "suggests the current regime persists",
    "hints at a short-lived swing",
    "keeps the target anchored",
    "loads momentum into the next step",
)


class MockBackend(Backend):
    """Deterministic offline backend.

    Resolution order per request: replay ledger (by digest), scripted rules
    (first match wins), then built-in behaviors keyed on template markers.
    With ``strict_replay`` the built-ins are disabled and a miss raises
    :class:`ReplayMissError`.
    """

    def __init__(self, cfg: BackendConfig, rules: list[MockRule] | None = None):
        super().__init__(cfg)
        self.rules = rules or []
        self.replay: dict[str, dict] = {}
        if cfg.replay_path:
            self._load_replay(Path(cfg.replay_path))

    def __deepcopy__(self, memo):
        return MockBackend(
            copy.deepcopy(self.cfg, memo), rules=copy.deepcopy(self.rules, memo)
        )

    def _load_replay(self, path: Path) -> None:
        with path.open("r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    record = json.loads(line)
                    self.replay[record["digest"]] = record["response"]

    def _chat_impl(self, request: ChatRequest, digest: str) -> ChatResponse:
        if digest in self.replay:
            stored = self.replay[digest]
            return ChatResponse(**stored)
        content = request.text_content()
        for rule in self.rules:
            if rule.matches(content):
                return self._wrap(request, rule.next_response())
        if self.cfg.strict_replay:
            raise ReplayMissError(f"no replay entry or rule for digest {digest[:12]}")
        return self._wrap(request, self._default_reply(content, digest))

    def _wrap(self, request: ChatRequest, reply: str) -> ChatResponse:
        prompt_tokens = sum(
            -(-len(p["text"]) // 4) for p in request.user_parts if p["type"] == "text"
        )
        prompt_tokens += -(-len(request.system_text) // 4)
        prompt_tokens += MOCK_IMAGE_TOKENS * request.image_count()
        return ChatResponse(
            text=reply,
            prompt_tokens=prompt_tokens,
            completion_tokens=-(-len(reply) // 4),
            latency_ms=0.0,
        )

    def _default_reply(self, content: str, digest: str) -> str:
        seed = int(digest[:8], 16)
        if "Do not mention the actual outcome" in content:
            n_paths = 3 + seed % 3
            lines = []
            for i in range(n_paths):
                move = _MOCK_MOVES[(seed + i) % len(_MOCK_MOVES)]
                effect = _MOCK_EFFECTS[(seed // 7 + i) % len(_MOCK_EFFECTS)]
                lines.append(f"- Signal {i + 1} {move} across the window -> {effect}")
            return "\n".join(lines)
        if "brief, factual summary" in content:
            return (
                "The chart shows co-moving variables with mixed short-term swings; "
                f"the dominant pattern code is {digest[:8]}."
            )
        if "'reasoning' and 'prediction' keys" in content:
            labels = sorted({int(m) for m in re.findall(r"\b(\d)\s*\(", content)}) or [0]
            label = labels[seed % len(labels)]
            return json.dumps(
                {
                    "reasoning": (
                        f"Pattern code {digest[:8]} lines up with the provided examples; "
                        "the dominant drivers point to the selected class."
                    ),
                    "prediction": label,
                },
                sort_keys=True,
            )
        return f"mock-reply-{digest[:12]}"

    def _embed_impl(self, text: str, digest: str) -> list[float]:
        return pseudo_embedding(text, self.cfg.mock_embed_dim)


def pseudo_embedding(text: str, dim: int) -> list[float]:
    """Deterministic stand-in embedding: hash-seeded token-multiset projection.

    Every token contributes a fixed pseudo-random direction (seeded from the
    token's SHA-256, so stable across processes) scaled by its count.
    """
    vector = np.zeros(dim, dtype=np.float64)
    tokens: dict[str, int] = {}
    for token in text.lower().split():
        tokens[token] = tokens.get(token, 0) + 1
    for token, count in tokens.items():
        seed = int.from_bytes(hashlib.sha256(token.encode("utf-8")).digest()[:8], "big")
        rng = np.random.default_rng(seed)
        vector += count * rng.standard_normal(dim)
    return [float(v) for v in vector]


class HttpBackend(Backend):
    """Client for the standard chat-completions / embeddings endpoints."""

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.cfg.api_key_env_var:
            key = os.environ.get(self.cfg.api_key_env_var, "")
            if key:
                headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post(self, path: str, payload: dict) -> dict:
        url = self.cfg.base_url.rstrip("/") + path
        last_exc: Exception | None = None
        for attempt in range(self.cfg.retry_limit + 1):
            try:
                resp = requests.post(
                    url, json=payload, headers=self._headers(), timeout=self.cfg.timeout_s
                )
            except (requests.ConnectionError, requests.Timeout) as exc:
                last_exc = exc
                time.sleep(min(2.0**attempt * 0.5, 8.0))
                continue
            if 400 <= resp.status_code < 500:
                raise RequestError(f"HTTP {resp.status_code} from {url}: {resp.text[:500]}")
            if resp.status_code >= 500:
                last_exc = TransportError(f"HTTP {resp.status_code} from {url}")
                time.sleep(min(2.0**attempt * 0.5, 8.0))
                continue
            return resp.json()
        raise TransportError(f"request to {url} failed after {self.cfg.retry_limit + 1} attempts") from last_exc

    def _chat_impl(self, request: ChatRequest, digest: str) -> ChatResponse:
        started = time.monotonic()
        body = self._post("/chat/completions", build_chat_payload(request))
        elapsed_ms = (time.monotonic() - started) * 1000.0
        try:
            text = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise RequestError(f"malformed chat response: {json.dumps(body)[:500]}") from exc
        usage = body.get("usage", {})
        return ChatResponse(
            text=text or "",
            prompt_tokens=int(usage.get("prompt_tokens", 0)),
            completion_tokens=int(usage.get("completion_tokens", 0)),
            latency_ms=elapsed_ms,
        )

    def _embed_impl(self, text: str, digest: str) -> list[float]:
        body = self._post("/embeddings", {"model": self.cfg.embed_model, "input": text})
        try:
            return [float(v) for v in body["data"][0]["embedding"]]
        except (KeyError, IndexError, TypeError) as exc:
            raise RequestError(f"malformed embedding response: {json.dumps(body)[:500]}") from exc


def build_chat_payload(request: ChatRequest) -> dict:
    """Wire payload in the de-facto standard chat-completions shape."""
    content = []
    for part in request.user_parts:
        if part["type"] == "text":
            content.append({"type": "text", "text": part["text"]})
        elif part["type"] == "image":
            content.append({"type": "image_url", "image_url": {"url": part["data_url"]}})
        else:
            raise PipelineError(f"unknown part type {part['type']!r}")
    messages = []
    if request.system_text:
        messages.append({"role": "system", "content": request.system_text})
    messages.append({"role": "user", "content": content})
    return {
        "model": request.model_id,
        "messages": messages,
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
    }


def make_backend(cfg: BackendConfig, rules: list[MockRule] | None = None) -> Backend:
    if cfg.kind == "mock":
        return MockBackend(cfg, rules=rules)
    return HttpBackend(cfg)


def chat(request: ChatRequest, cfg: BackendConfig) -> ChatResponse:
    """One-shot functional form of :meth:`Backend.chat`."""
    return make_backend(cfg).chat(request)


def embed_text(text: str, cfg: BackendConfig) -> list[float]:
    """One-shot functional form of :meth:`Backend.embed_text`."""
    return make_backend(cfg).embed_text(text)
