"""Model dispatch through a uniform chat contract with a record/replay cache.

Every request is keyed by a content fingerprint over the model id, the
role-tagged messages and the generation parameters. In ``record`` mode a
cached response is reused when present, otherwise the backend is called and
the answer stored before returning. ``replay`` never touches a backend;
``bypass`` never touches the cache.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Protocol, Sequence

import httpx

from .errors import AuthError, CacheMiss, ContextLengthExceeded, GatewayError, TransportError
from .prompting import GenerationParams, Message, PromptBundle

log = logging.getLogger(__name__)

RECORD = "record"
REPLAY = "replay"
BYPASS = "bypass"
CACHE_MODES = (RECORD, REPLAY, BYPASS)

LIVE = "live"
FROM_CACHE = "replay"


@dataclass(frozen=True)
class ModelConfig:
    model_id: str
    provider: str = "openai"
    endpoint: str = ""
    api_key_env: str | None = None  # name of the env var, never the secret itself
    api_model: str | None = None
    params: GenerationParams | None = None
    priority_rank: int = 1
    context_window: int | None = None
    script: str | None = None  # mock provider only

    @property
    def wire_model(self) -> str:
        return self.api_model or self.model_id

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "provider": self.provider,
            "endpoint": self.endpoint,
            "api_key_env": self.api_key_env,
            "api_model": self.api_model,
            "params": self.params.to_dict() if self.params else None,
            "priority_rank": self.priority_rank,
            "context_window": self.context_window,
            "script": self.script,
        }


@dataclass(frozen=True)
class RawResponse:
    model_id: str
    request_fingerprint: str
    text: str
    latency_ms: int = 0
    fetched_at: str = ""
    origin: str = LIVE

    ok = True


@dataclass(frozen=True)
class FailedRequest:
    model_id: str
    request_fingerprint: str
    error_type: str
    error: str

    ok = False


def effective_params(bundle: PromptBundle, cfg: ModelConfig) -> GenerationParams:
    return cfg.params or bundle.params


def fingerprint(
    model_id: str, messages: Sequence[Message], params: GenerationParams, repeat: int = 0
) -> str:
    payload = {
        "model_id": model_id,
        "messages": [[m.role, m.text] for m in messages],
        "params": params.to_dict(),
    }
    if repeat:
        payload["repeat"] = repeat
    canonical = json.dumps(payload, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def request_fingerprint(bundle: PromptBundle, cfg: ModelConfig, repeat: int = 0) -> str:
    return fingerprint(cfg.model_id, bundle.messages, effective_params(bundle, cfg), repeat)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


# -- cache --------------------------------------------------------------------


class ResponseCache:
    """Content-addressed on-disk store: one JSON file per fingerprint plus an index.

    Entries are written to a temp file and renamed into place, so a crash
    never leaves a partially written entry behind.
    """

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _path(self, fp: str) -> Path:
        return self.root / f"{fp}.json"

    def get(self, fp: str) -> dict | None:
        try:
            with self._path(fp).open(encoding="utf-8") as fh:
                return json.load(fh)
        except FileNotFoundError:
            return None

    def __contains__(self, fp: str) -> bool:
        return self._path(fp).exists()

    def put(self, fp: str, entry: dict) -> None:
        data = json.dumps(entry, ensure_ascii=False, sort_keys=True, indent=1)
        with self._lock:
            fd, tmp = tempfile.mkstemp(dir=self.root, prefix=".tmp-", suffix=".json")
            try:
                with os.fdopen(fd, "w", encoding="utf-8") as fh:
                    fh.write(data)
                os.replace(tmp, self._path(fp))
            except BaseException:
                Path(tmp).unlink(missing_ok=True)
                raise
            with (self.root / "index.jsonl").open("a", encoding="utf-8") as fh:
                fh.write(json.dumps({"fingerprint": fp, "model_id": entry.get("model_id")}) + "\n")

    def entries(self) -> list[Path]:
        return sorted(p for p in self.root.glob("*.json") if not p.name.startswith(".tmp-"))

    def stats(self) -> dict:
        by_model: dict[str, int] = {}
        total_bytes = 0
        files = self.entries()
        for p in files:
            total_bytes += p.stat().st_size
            with p.open(encoding="utf-8") as fh:
                model = json.load(fh).get("model_id", "?")
            by_model[model] = by_model.get(model, 0) + 1
        return {"entries": len(files), "bytes": total_bytes, "by_model": dict(sorted(by_model.items()))}


# -- backends -------------------------------------------------------------------


class ChatBackend(Protocol):
    """Ordered role-tagged messages plus params in, completion text out."""

    def chat(self, cfg: ModelConfig, bundle: PromptBundle, params: GenerationParams) -> str: ...


_CONTEXT_HINTS = ("context_length", "context length", "maximum context", "too many tokens")


class OpenAICompatibleBackend:
    """``POST {endpoint}/chat/completions`` in the OpenAI wire format.

    OpenAI, Groq, Together, vLLM and most hosted open-model providers speak
    this protocol, which covers the whole roster of the experiments.
    """

    def __init__(self, client: httpx.Client | None = None, timeout: float = 120.0) -> None:
        self.client = client or httpx.Client(timeout=timeout)

    def chat(self, cfg: ModelConfig, bundle: PromptBundle, params: GenerationParams) -> str:
        headers = {"Content-Type": "application/json"}
        if cfg.api_key_env:
            key = os.environ.get(cfg.api_key_env)
            if not key:
                raise AuthError(f"environment variable {cfg.api_key_env} is not set")
            headers["Authorization"] = f"Bearer {key}"
        body = {
            "model": cfg.wire_model,
            "messages": [{"role": m.role, "content": m.text} for m in bundle.messages],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
            "n": 1,
        }
        url = cfg.endpoint.rstrip("/") + "/chat/completions"
        try:
            resp = self.client.post(url, headers=headers, json=body)
        except httpx.TransportError as exc:
            raise TransportError(f"{cfg.model_id}: {exc}") from exc

        if resp.status_code in (401, 403):
            raise AuthError(f"{cfg.model_id}: HTTP {resp.status_code}")
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransportError(f"{cfg.model_id}: HTTP {resp.status_code}")
        if resp.status_code >= 400:
            detail = resp.text
            if any(h in detail.lower() for h in _CONTEXT_HINTS):
                raise ContextLengthExceeded(f"{cfg.model_id}: {detail[:200]}")
            raise GatewayError(f"{cfg.model_id}: HTTP {resp.status_code}: {detail[:200]}")
        try:
            return resp.json()["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise GatewayError(f"{cfg.model_id}: unexpected response shape") from exc


def with_retries(
    fn: Callable[[], str],
    attempts: int = 3,
    base_delay: float = 1.0,
    sleep: Callable[[float], None] = time.sleep,
) -> str:
    """Call ``fn`` up to ``attempts`` times, backing off exponentially on TransportError."""
    for attempt in range(attempts):
        try:
            return fn()
        except TransportError:
            if attempt == attempts - 1:
                raise
            delay = base_delay * (2**attempt)
            log.warning("transport error, retrying in %.1fs (attempt %d/%d)", delay, attempt + 1, attempts)
            sleep(delay)
    raise AssertionError("unreachable")


def estimate_tokens(messages: Sequence[Message]) -> int:
    # rough 4-characters-per-token heuristic
    return sum(len(m.text) for m in messages) // 4 + 4 * len(messages)


# -- gateway --------------------------------------------------------------------


@dataclass
class CacheStats:
    hits: int = 0
    misses: int = 0
    live_calls: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def bump(self, name: str) -> None:
        with self._lock:
            setattr(self, name, getattr(self, name) + 1)

    def to_dict(self) -> dict:
        return {"hits": self.hits, "misses": self.misses, "live_calls": self.live_calls}


class Gateway:
    def __init__(
        self,
        cache: ResponseCache | None = None,
        mode: str = RECORD,
        backends: dict[str, ChatBackend] | None = None,
        retry_attempts: int = 3,
        retry_base_delay: float = 1.0,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        if mode not in CACHE_MODES:
            raise ValueError(f"unknown cache mode {mode!r}")
        if mode != BYPASS and cache is None:
            raise ValueError(f"cache mode {mode!r} needs a cache")
        self.cache = cache
        self.mode = mode
        self.backends: dict[str, ChatBackend] = backends if backends is not None else default_backends()
        self.retry_attempts = retry_attempts
        self.retry_base_delay = retry_base_delay
        self.sleep = sleep
        self.stats = CacheStats()

    def register(self, provider: str, backend: ChatBackend) -> None:
        self.backends[provider] = backend

    def _backend(self, cfg: ModelConfig) -> ChatBackend:
        try:
            return self.backends[cfg.provider]
        except KeyError:
            raise GatewayError(f"no backend registered for provider {cfg.provider!r}") from None

    def complete(self, bundle: PromptBundle, cfg: ModelConfig, repeat: int = 0) -> RawResponse:
        params = effective_params(bundle, cfg)
        fp = fingerprint(cfg.model_id, bundle.messages, params, repeat)

        if self.mode != BYPASS:
            entry = self.cache.get(fp)
            if entry is not None:
                self.stats.bump("hits")
                return RawResponse(
                    cfg.model_id, fp, entry["text"], entry.get("latency_ms", 0),
                    entry.get("fetched_at", ""), FROM_CACHE,
                )
            self.stats.bump("misses")
            if self.mode == REPLAY:
                raise CacheMiss(fp, cfg.model_id)

        if cfg.context_window is not None:
            needed = estimate_tokens(bundle.messages) + params.max_tokens
            if needed > cfg.context_window:
                raise ContextLengthExceeded(
                    f"{cfg.model_id}: ~{needed} tokens exceeds window of {cfg.context_window}"
                )

        backend = self._backend(cfg)
        start = time.monotonic()
        text = with_retries(
            lambda: backend.chat(cfg, bundle, params),
            self.retry_attempts,
            self.retry_base_delay,
            self.sleep,
        )
        latency = int((time.monotonic() - start) * 1000)
        self.stats.bump("live_calls")
        response = RawResponse(cfg.model_id, fp, text, latency, _now(), LIVE)
        if self.mode == RECORD:
            self.cache.put(
                fp,
                {
                    "fingerprint": fp,
                    "model_id": cfg.model_id,
                    "text": text,
                    "latency_ms": latency,
                    "fetched_at": response.fetched_at,
                    "template_id": bundle.template_id,
                    "template_version": bundle.template_version,
                    "request": {
                        "messages": [[m.role, m.text] for m in bundle.messages],
                        "params": params.to_dict(),
                        "repeat": repeat,
                    },
                },
            )
        return response

    def try_complete(
        self, bundle: PromptBundle, cfg: ModelConfig, repeat: int = 0
    ) -> RawResponse | FailedRequest:
        try:
            return self.complete(bundle, cfg, repeat)
        except GatewayError as exc:
            log.warning("%s request failed: %s", cfg.model_id, exc)
            return FailedRequest(
                cfg.model_id, request_fingerprint(bundle, cfg, repeat), type(exc).__name__, str(exc)
            )

    def complete_batch(
        self,
        requests: Sequence[tuple[PromptBundle, ModelConfig]],
        parallelism: int = 1,
        repeat: int = 0,
    ) -> list[RawResponse | FailedRequest]:
        """Dispatch many requests with at most ``parallelism`` in flight.

        Results come back in request order. Failures are returned as
        ``FailedRequest`` entries rather than aborting the batch.
        """
        if parallelism < 1:
            raise ValueError("parallelism must be >= 1")
        if parallelism == 1:
            return [self.try_complete(b, c, repeat) for b, c in requests]
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            return list(pool.map(lambda req: self.try_complete(req[0], req[1], repeat), requests))


def default_backends() -> dict[str, ChatBackend]:
    from .mockmodels import MockBackend

    return {"openai": OpenAICompatibleBackend(), "mock": MockBackend()}
