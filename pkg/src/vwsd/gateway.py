"""Chat-completion client: cache-first, retrying, replayable offline.

Every completion is keyed by a content hash of the request and stored
under cache/llm/<first two hex chars>/<key>.json, so a warmed cache
replays a whole run without network access.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import requests

from .errors import (
    AuthenticationError,
    GatewayError,
    RateLimitedError,
    ReplayGapError,
    RetriesExhaustedError,
    TransientError,
)

BASE_URL_ENV = "VWSD_LLM_BASE_URL"
API_KEY_ENV = "VWSD_LLM_API_KEY"

MAX_ATTEMPTS = 5
BACKOFF_BASE_S = 1.0
BACKOFF_FACTOR = 2.0

_ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class LlmRequest:
    model: str
    messages: tuple[tuple[str, str], ...]
    temperature: float = 0.0
    max_tokens: int = 150
    seed_tag: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "messages", tuple((r, c) for r, c in self.messages))
        if not any(role == "user" for role, _ in self.messages):
            raise GatewayError("request must contain at least one user message")
        for role, content in self.messages:
            if role not in _ROLES:
                raise GatewayError(f"unknown message role {role!r}")
            if not content:
                raise GatewayError("empty message content")
        if self.temperature < 0:
            raise GatewayError("temperature must be non-negative")
        if self.max_tokens < 1:
            raise GatewayError("max_tokens must be positive")

    def cache_key(self) -> str:
        payload = json.dumps(
            {
                "model": self.model,
                "messages": [list(m) for m in self.messages],
                "temperature": self.temperature,
                "max_tokens": self.max_tokens,
                "seed_tag": self.seed_tag,
            },
            sort_keys=True,
            separators=(",", ":"),
            ensure_ascii=False,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class LlmResponse:
    text: str
    cached: bool
    latency_ms: int
    model: str


class RateLimiter:
    """Token bucket: at most rpm dispatches per minute, thread-safe."""

    def __init__(self, rpm: int, now: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        if rpm < 0:
            raise GatewayError("rpm must be non-negative")
        self.rpm = rpm
        self._now = now
        self._sleep = sleep
        self._lock = threading.Lock()
        self._tokens = float(rpm)
        self._last = now()

    def acquire(self) -> None:
        if self.rpm == 0:
            return
        while True:
            with self._lock:
                t = self._now()
                self._tokens = min(self._tokens + (t - self._last) * self.rpm / 60.0, float(self.rpm))
                self._last = t
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) * 60.0 / self.rpm
            self._sleep(wait)


def http_transport(base_url: str, api_key: str = "", timeout: float = 60.0) -> Callable[[LlmRequest], str]:
    """POST /v1/chat/completions in the OpenAI chat shape."""
    url = base_url.rstrip("/") + "/v1/chat/completions"
    headers = {"Content-Type": "application/json"}
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"

    def call(request: LlmRequest) -> str:
        body = {
            "model": request.model,
            "messages": [{"role": r, "content": c} for r, c in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        try:
            resp = requests.post(url, headers=headers, json=body, timeout=timeout)
        except requests.RequestException as exc:
            raise TransientError(f"request to {url} failed: {exc}") from None
        if resp.status_code == 429:
            retry_after = resp.headers.get("Retry-After")
            raise RateLimitedError(retry_after=float(retry_after) if retry_after else None)
        if resp.status_code in (401, 403):
            raise AuthenticationError(f"endpoint rejected credentials (HTTP {resp.status_code})")
        if resp.status_code >= 500:
            raise TransientError(f"server error HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise GatewayError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            data = resp.json()
            choice = data["choices"][0]
        except (ValueError, KeyError, IndexError):
            raise GatewayError(f"malformed completion payload from {url}") from None
        if "message" in choice:
            text = choice["message"].get("content")
        else:
            text = choice.get("text")  # legacy completions shape, normalized here
        if not isinstance(text, str):
            raise GatewayError(f"completion payload from {url} carries no text")
        return text

    return call


class ScriptedTransport:
    """In-memory transport for tests and fixtures.

    Maps the last user message to a completion; optional queued
    exceptions are raised before any scripted success.  Every request is
    appended to `calls`.
    """

    def __init__(self, script: dict[str, str] | None = None, default: str | None = None,
                 failures: list[Exception] | None = None):
        self.script = dict(script or {})
        self.default = default
        self.failures = list(failures or [])
        self.calls: list[LlmRequest] = []
        self._lock = threading.Lock()

    def __call__(self, request: LlmRequest) -> str:
        with self._lock:
            self.calls.append(request)
            if self.failures:
                raise self.failures.pop(0)
        prompt = next(c for r, c in reversed(request.messages) if r == "user")
        if prompt in self.script:
            return self.script[prompt]
        if self.default is not None:
            return self.default
        raise TransientError(f"unscripted prompt: {prompt[:80]!r}")


class LlmGateway:
    """Cache-first completion client with bounded retries."""

    def __init__(self, cache_dir: str | Path, transport: Callable[[LlmRequest], str] | None = None,
                 offline: bool = False, rpm: int = 0,
                 sleep: Callable[[float], None] = time.sleep,
                 now: Callable[[], float] = time.monotonic):
        self.cache_dir = Path(cache_dir)
        self.transport = transport
        self.offline = offline
        self.limiter = RateLimiter(rpm, now=now, sleep=sleep) if rpm else None
        self._sleep = sleep
        self._now = now
        self._registry_lock = threading.Lock()
        self._key_locks: dict[str, threading.Lock] = {}

    def complete(self, request: LlmRequest) -> LlmResponse:
        key = request.cache_key()
        text = read_cache_entry(self.cache_dir, key)
        if text is not None:
            return LlmResponse(text=text, cached=True, latency_ms=0, model=request.model)
        if self.offline:
            raise ReplayGapError(key)
        # identical concurrent requests share one upstream call
        with self._lock_for(key):
            text = read_cache_entry(self.cache_dir, key)
            if text is not None:
                return LlmResponse(text=text, cached=True, latency_ms=0, model=request.model)
            text, latency_ms = self._call_with_retries(request)
            write_cache_entry(self.cache_dir, request, text)
        return LlmResponse(text=text, cached=False, latency_ms=latency_ms, model=request.model)

    def _lock_for(self, key: str) -> threading.Lock:
        with self._registry_lock:
            lock = self._key_locks.get(key)
            if lock is None:
                lock = threading.Lock()
                self._key_locks[key] = lock
            return lock

    def _call_with_retries(self, request: LlmRequest) -> tuple[str, int]:
        if self.transport is None:
            raise GatewayError(
                f"no completion endpoint configured; set {BASE_URL_ENV} or run with --offline"
            )
        delay = BACKOFF_BASE_S
        last: Exception | None = None
        for attempt in range(1, MAX_ATTEMPTS + 1):
            if self.limiter is not None:
                self.limiter.acquire()
            t0 = self._now()
            try:
                text = self.transport(request)
                return text, max(0, int((self._now() - t0) * 1000))
            except RateLimitedError as exc:
                last = exc
                wait = exc.retry_after if exc.retry_after is not None else delay
            except TransientError as exc:
                last = exc
                wait = delay
            if attempt < MAX_ATTEMPTS:
                self._sleep(wait)
                delay *= BACKOFF_FACTOR
        raise RetriesExhaustedError(f"gave up after {MAX_ATTEMPTS} attempts: {last}")


def cache_path(cache_dir: str | Path, key: str) -> Path:
    return Path(cache_dir) / "llm" / key[:2] / f"{key}.json"


def read_cache_entry(cache_dir: str | Path, key: str) -> str | None:
    path = cache_path(cache_dir, key)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        return None
    except json.JSONDecodeError as exc:
        raise GatewayError(f"corrupt cache entry {path}: {exc.msg}") from None
    try:
        return data["response"]["text"]
    except (KeyError, TypeError):
        raise GatewayError(f"corrupt cache entry {path}: missing response text") from None


def write_cache_entry(cache_dir: str | Path, request: LlmRequest, text: str) -> str:
    """Store a completion; returns the cache key.  Atomic per entry."""
    key = request.cache_key()
    path = cache_path(cache_dir, key)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "key": key,
        "request": {
            "model": request.model,
            "messages": [list(m) for m in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
            "seed_tag": request.seed_tag,
        },
        "response": {"text": text, "model": request.model},
    }
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    os.replace(tmp, path)
    return key


def gateway_from_env(cache_dir: str | Path, offline: bool = False, rpm: int = 0,
                     base_url: str = "", api_key: str = "") -> LlmGateway:
    """Build a gateway from explicit settings plus the two env overrides."""
    base_url = os.environ.get(BASE_URL_ENV, base_url)
    api_key = os.environ.get(API_KEY_ENV, api_key)
    transport = http_transport(base_url, api_key) if base_url else None
    return LlmGateway(cache_dir=cache_dir, transport=transport, offline=offline, rpm=rpm)
