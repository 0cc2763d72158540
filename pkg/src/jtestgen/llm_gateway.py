"""Completion backends: live chat-completions HTTP, transcript replay, and
scripted stubs. All of them share the ``complete(request)`` surface."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import threading
import time
from collections import OrderedDict, deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence, Union

from .errors import GatewayError, RateLimited, TokenOverflow, TranscriptMiss, TransportError

log = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant")


def estimate_tokens(text: str) -> int:
    """Cheap token estimate (about four characters per token)."""
    return math.ceil(len(text) / 4)


@dataclass(frozen=True)
class Message:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")


@dataclass(frozen=True)
class CompletionRequest:
    messages: tuple[Message, ...]
    model_id: str = "gpt-3.5-turbo"
    temperature: float = 0.0
    max_tokens: int = 2048
    # free-form label such as "seed" or "repair"; not part of the key
    purpose: str = ""

    def __post_init__(self):
        if not any(m.role == "user" for m in self.messages):
            raise ValueError("a completion request needs at least one user message")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")

    @classmethod
    def user(cls, prompt: str, system: str | None = None, **kw) -> "CompletionRequest":
        msgs = []
        if system:
            msgs.append(Message("system", system))
        msgs.append(Message("user", prompt))
        return cls(messages=tuple(msgs), **kw)

    @property
    def request_key(self) -> str:
        # temperature is deliberately left out so transcripts survive sampling changes
        payload = {
            "model_id": self.model_id,
            "messages": [[m.role, m.content] for m in self.messages],
        }
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "messages": [{"role": m.role, "content": m.content} for m in self.messages],
        }


@dataclass(frozen=True)
class CompletionResponse:
    content: str
    finish_reason: str = "stop"
    prompt_tokens: int = 0
    completion_tokens: int = 0

    def __post_init__(self):
        if self.finish_reason not in ("stop", "length", "error"):
            raise ValueError(f"bad finish_reason {self.finish_reason!r}")
        if (self.content == "") != (self.finish_reason == "error"):
            raise ValueError("content must be empty exactly when finish_reason is 'error'")

    def to_dict(self) -> dict:
        return {
            "content": self.content,
            "finish_reason": self.finish_reason,
            "token_usage": {"prompt": self.prompt_tokens, "completion": self.completion_tokens},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CompletionResponse":
        usage = d.get("token_usage", {})
        return cls(d["content"], d.get("finish_reason", "stop"), usage.get("prompt", 0), usage.get("completion", 0))


class Gateway(Protocol):
    def complete(self, req: CompletionRequest) -> CompletionResponse: ...


# --------------------------------------------------------------------------
# transcripts


@dataclass
class Transcript:
    entries: "OrderedDict[str, CompletionResponse]" = field(default_factory=OrderedDict)
    requests: dict[str, dict] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, key: str) -> bool:
        return key in self.entries

    def get(self, key: str) -> CompletionResponse:
        try:
            return self.entries[key]
        except KeyError:
            raise TranscriptMiss(key) from None

    def save(self, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [json.dumps({"type": "meta", **self.metadata}, sort_keys=True, ensure_ascii=False)]
        for key, resp in self.entries.items():
            rec = {"type": "entry", "request_key": key, "response": resp.to_dict()}
            if key in self.requests:
                rec["request"] = self.requests[key]
            lines.append(json.dumps(rec, sort_keys=True, ensure_ascii=False))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "Transcript":
        t = cls()
        with path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                if rec.get("type") == "meta":
                    rec.pop("type")
                    t.metadata = rec
                    continue
                t.entries[rec["request_key"]] = CompletionResponse.from_dict(rec["response"])
                if "request" in rec:
                    t.requests[rec["request_key"]] = rec["request"]
        return t


def record(req: CompletionRequest, resp: CompletionResponse, transcript: Transcript) -> Transcript:
    key = req.request_key
    if key in transcript.entries:
        log.warning("overwriting transcript entry %s", key[:12])
        del transcript.entries[key]
    transcript.entries[key] = resp
    transcript.requests[key] = req.to_dict()
    return transcript


# --------------------------------------------------------------------------
# backends


class ReplayBackend:
    """Answers strictly from a transcript; a miss is an error, never a fallback."""

    def __init__(self, transcript: Transcript):
        self.transcript = transcript

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        return self.transcript.get(req.request_key)


Scripted = Union[str, CompletionResponse, Exception]


class StubBackend:
    """Returns scripted responses in order.

    ``script`` may be a sequence (the last item repeats once exhausted, unless
    ``repeat_last`` is false) or a callable ``f(request, call_index)``.
    """

    def __init__(self, script: Sequence[Scripted] | Callable[[CompletionRequest, int], Scripted], repeat_last: bool = True):
        self._script = script
        self._repeat_last = repeat_last
        self._lock = threading.Lock()
        self.calls: list[CompletionRequest] = []

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        with self._lock:
            idx = len(self.calls)
            self.calls.append(req)
        if callable(self._script):
            item = self._script(req, idx)
        else:
            if idx >= len(self._script):
                if not self._repeat_last or not self._script:
                    raise GatewayError("stub script exhausted")
                item = self._script[-1]
            else:
                item = self._script[idx]
        if isinstance(item, Exception):
            raise item
        if isinstance(item, CompletionResponse):
            return item
        return CompletionResponse(content=item) if item else CompletionResponse("", "error")


class RecordingBackend:
    """Forwards to another backend and records every exchange."""

    def __init__(self, inner: Gateway, transcript: Transcript | None = None, path: Path | None = None):
        self.inner = inner
        self.transcript = transcript if transcript is not None else Transcript()
        self.path = path
        self._lock = threading.Lock()

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        resp = self.inner.complete(req)
        with self._lock:
            record(req, resp, self.transcript)
            if self.path is not None:
                self.transcript.save(self.path)
        return resp


class _TokenBucket:
    def __init__(self, tokens_per_minute: int | None):
        self.rate = tokens_per_minute
        self.window: deque[tuple[float, int]] = deque()
        self.lock = threading.Lock()

    def acquire(self, tokens: int) -> None:
        if not self.rate:
            return
        while True:
            with self.lock:
                now = time.monotonic()
                while self.window and now - self.window[0][0] > 60:
                    self.window.popleft()
                used = sum(t for _, t in self.window)
                if used + tokens <= self.rate or not self.window:
                    self.window.append((now, tokens))
                    return
                wait = 60 - (now - self.window[0][0])
            time.sleep(max(wait, 0.05))


class HttpBackend:
    """Chat-completions client against any compatible base URL."""

    def __init__(
        self,
        base_url: str,
        api_key_env: str = "OPENAI_API_KEY",
        timeout: float = 120.0,
        max_attempts: int = 3,
        backoff: float = 1.0,
        max_in_flight: int = 4,
        tokens_per_minute: int | None = None,
        context_tokens: int = 16384,
        client=None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        import httpx

        self.base_url = base_url.rstrip("/")
        self.api_key = os.environ.get(api_key_env, "")
        self.max_attempts = max_attempts
        self.backoff = backoff
        self.context_tokens = context_tokens
        self._sem = threading.BoundedSemaphore(max_in_flight)
        self._bucket = _TokenBucket(tokens_per_minute)
        self._sleep = sleep
        self._client = client or httpx.Client(timeout=timeout)

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        import httpx

        prompt_tokens = sum(estimate_tokens(m.content) for m in req.messages)
        if prompt_tokens + req.max_tokens > self.context_tokens:
            raise TokenOverflow(f"request needs ~{prompt_tokens + req.max_tokens} tokens, context is {self.context_tokens}")
        body = {
            "model": req.model_id,
            "messages": [{"role": m.role, "content": m.content} for m in req.messages],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        self._bucket.acquire(prompt_tokens + req.max_tokens)
        last_exc: Exception | None = None
        for attempt in range(self.max_attempts):
            with self._sem:
                try:
                    r = self._client.post(f"{self.base_url}/chat/completions", json=body, headers=headers)
                except httpx.TransportError as exc:
                    last_exc = TransportError(str(exc))
                    self._sleep(self.backoff * 2**attempt)
                    continue
            if r.status_code == 429:
                last_exc = RateLimited(r.text[:200])
                self._sleep(_retry_after(r.headers.get("retry-after"), self.backoff * 2**attempt))
                continue
            if r.status_code >= 500:
                last_exc = TransportError(f"HTTP {r.status_code}: {r.text[:200]}")
                self._sleep(self.backoff * 2**attempt)
                continue
            if r.status_code == 400 and "context" in r.text.lower():
                raise TokenOverflow(r.text[:200])
            if r.status_code >= 400:
                raise GatewayError(f"HTTP {r.status_code}: {r.text[:200]}")
            return _parse_chat_response(r.json())
        assert last_exc is not None
        raise last_exc


def _retry_after(header: str | None, default: float) -> float:
    if header is None:
        return default
    try:
        return float(header)
    except ValueError:
        return default


def _parse_chat_response(data: dict) -> CompletionResponse:
    try:
        choice = data["choices"][0]
        content = choice["message"].get("content") or ""
    except (KeyError, IndexError, TypeError) as exc:
        raise GatewayError(f"malformed chat response: {exc}") from exc
    finish = choice.get("finish_reason") or "stop"
    if finish not in ("stop", "length"):
        finish = "stop"
    if not content:
        finish = "error"
    usage = data.get("usage") or {}
    return CompletionResponse(content, finish, usage.get("prompt_tokens", 0), usage.get("completion_tokens", 0))


def call_text(gateway: Gateway, prompt: str, model_id: str, max_tokens: int, purpose: str = "", system: str | None = None) -> str:
    req = CompletionRequest.user(prompt, system=system, model_id=model_id, max_tokens=max_tokens, purpose=purpose)
    return gateway.complete(req).content


def load_stub_script(items: Iterable[object]) -> list[Scripted]:
    out: list[Scripted] = []
    for item in items:
        if isinstance(item, dict):
            out.append(CompletionResponse.from_dict(item))
        else:
            out.append(str(item))
    return out
