"""Text-generation backends: remote chat-completions, scripted, and replay.

Every backend takes a :class:`GenerationRequest` and returns a
:class:`GenerationResult`. The scripted and replay backends make the whole
pipeline bit-deterministic offline; cassettes are how live runs are captured
for later replay.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

import httpx

from .errors import (
    BackendUnavailable,
    CassetteMiss,
    ParseError,
    RateLimited,
    ScriptExhausted,
    Timeout,
)
from .prompts import PromptComponentKind, RenderedPrompt

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 30.0
DEFAULT_RETRIES = 3
DEFAULT_MAX_IN_FLIGHT = 4


@dataclass(frozen=True)
class GenerationRequest:
    prompt: RenderedPrompt
    temperature: float = 0.0
    max_output_chars: int = 4_000
    model_name: str = ""


@dataclass(frozen=True)
class GenerationResult:
    text: str
    latency: float
    backend: str
    from_cache: bool = False


class Backend(Protocol):
    name: str

    def generate(self, request: GenerationRequest) -> GenerationResult: ...


def prompt_hash(prompt: RenderedPrompt) -> str:
    """Stable key for cassette lookup."""
    return hashlib.sha256(prompt.flat_text.encode("utf-8")).hexdigest()


class ScriptBackend:
    """Replies with a fixed list of texts, in order; thread-safe."""

    name = "script"

    def __init__(self, script: list[str]):
        self._script = list(script)
        self._index = 0
        self._lock = threading.Lock()

    def generate(self, request: GenerationRequest) -> GenerationResult:
        with self._lock:
            if self._index >= len(self._script):
                raise ScriptExhausted(
                    f"script of {len(self._script)} replies exhausted")
            text = self._script[self._index]
            self._index += 1
        return GenerationResult(text=text, latency=0.0, backend=self.name)

    @property
    def calls(self) -> int:
        return self._index


class FunctionBackend:
    """Computes each reply from the request; handy for prompt-sensitive stubs."""

    name = "function"

    def __init__(self, fn: Callable[[GenerationRequest], str], name: str = "function"):
        self._fn = fn
        self.name = name

    def generate(self, request: GenerationRequest) -> GenerationResult:
        return GenerationResult(text=self._fn(request), latency=0.0, backend=self.name)


class RemoteBackend:
    """Chat-completions client with retry, backoff, and a concurrency cap.

    The System section maps to a system-role message; the remaining sections,
    concatenated in prompt order, form a single user-role message.
    """

    name = "remote"

    def __init__(self, endpoint: str, api_key: str = "", model: str = "",
                 timeout: float = DEFAULT_TIMEOUT, retries: int = DEFAULT_RETRIES,
                 max_in_flight: int = DEFAULT_MAX_IN_FLIGHT,
                 transport: httpx.BaseTransport | None = None,
                 sleeper: Callable[[float], None] = time.sleep):
        self._url = endpoint if endpoint.rstrip("/").endswith("/chat/completions") \
            else endpoint.rstrip("/") + "/chat/completions"
        self._model = model
        self._retries = max(1, retries)
        self._sleep = sleeper
        self._semaphore = threading.Semaphore(max_in_flight)
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    def generate(self, request: GenerationRequest) -> GenerationResult:
        payload = {
            "model": request.model_name or self._model,
            "temperature": request.temperature,
            "messages": build_messages(request.prompt),
        }
        start = time.monotonic()
        last_error: Exception | None = None
        rate_limited = False
        timed_out = False
        for attempt in range(self._retries):
            if attempt:
                log.warning("retrying generation (attempt %d/%d): %s",
                            attempt + 1, self._retries, last_error)
                self._sleep(2 ** (attempt - 1))
            try:
                with self._semaphore:
                    response = self._client.post(self._url, json=payload)
            except httpx.TimeoutException as exc:
                last_error, timed_out = exc, True
                continue
            except httpx.HTTPError as exc:
                last_error = exc
                continue
            if response.status_code == 429:
                rate_limited = True
                retry_after = response.headers.get("Retry-After")
                if retry_after is not None:
                    try:
                        self._sleep(float(retry_after))
                    except ValueError:
                        pass
                last_error = RuntimeError("rate limited")
                continue
            if response.status_code >= 400:
                last_error = RuntimeError(f"HTTP {response.status_code}: {response.text[:200]}")
                continue
            try:
                text = response.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError) as exc:
                raise BackendUnavailable(f"malformed completion response: {exc}") from exc
            return GenerationResult(
                text=text, latency=time.monotonic() - start, backend=self.name)
        if rate_limited:
            raise RateLimited(f"still rate limited after {self._retries} attempts")
        if timed_out:
            raise Timeout(f"no response within deadline after {self._retries} attempts")
        raise BackendUnavailable(
            f"request failed after {self._retries} attempts: {last_error}")


def build_messages(prompt: RenderedPrompt) -> list[dict[str, str]]:
    """Wire-format messages; section order is preserved in the user message."""
    messages = []
    user_parts = []
    for section in prompt.sections:
        if section.kind is PromptComponentKind.System:
            messages.append({"role": "system", "content": " ".join(section.body)})
        else:
            user_parts.append(section.render())
    messages.append({"role": "user", "content": "\n\n".join(user_parts)})
    return messages


# --- cassettes ---------------------------------------------------------------

@dataclass
class Cassette:
    """Recorded prompt/response pairs, serializable to a JSON file."""

    entries: list[dict] = field(default_factory=list)

    def add(self, prompt: RenderedPrompt, response_text: str, meta: dict | None = None) -> None:
        self.entries.append({
            "prompt_hash": prompt_hash(prompt),
            "prompt_text": prompt.flat_text,
            "response_text": response_text,
            "meta": meta or {},
        })

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.entries, indent=2, ensure_ascii=False), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Cassette":
        try:
            entries = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ParseError(f"cannot read cassette: {exc}") from exc
        if not isinstance(entries, list) or not all(
                isinstance(e, dict) and "prompt_hash" in e and "response_text" in e
                for e in entries):
            raise ParseError("cassette must be a JSON list of recorded calls")
        return cls(entries=entries)


class RecordingBackend:
    """Wraps another backend and captures every call into a cassette."""

    def __init__(self, inner: Backend):
        self._inner = inner
        self.cassette = Cassette()
        self._lock = threading.Lock()
        self.name = f"record({inner.name})"

    def generate(self, request: GenerationRequest) -> GenerationResult:
        result = self._inner.generate(request)
        with self._lock:
            self.cassette.add(request.prompt, result.text,
                              meta={"backend": result.backend, "latency": result.latency})
        return result


class ReplayBackend:
    """Serves recorded responses keyed by the prompt hash."""

    name = "replay"

    def __init__(self, cassette: Cassette):
        self._responses = {e["prompt_hash"]: e["response_text"] for e in cassette.entries}

    def generate(self, request: GenerationRequest) -> GenerationResult:
        key = prompt_hash(request.prompt)
        if key not in self._responses:
            raise CassetteMiss(f"no recorded response for prompt hash {key[:12]}")
        return GenerationResult(
            text=self._responses[key], latency=0.0, backend=self.name, from_cache=True)


def record_cassette(backend: Backend, requests: list[GenerationRequest]) -> Cassette:
    """Run the requests through a backend, capturing every response."""
    recorder = RecordingBackend(backend)
    for request in requests:
        recorder.generate(request)
    return recorder.cassette


def open_replay(source: str | Path | Cassette) -> ReplayBackend:
    cassette = source if isinstance(source, Cassette) else Cassette.load(source)
    return ReplayBackend(cassette)
