"""Completion gateway over interchangeable backends.

Two backends share one contract: a deterministic scripted backend for tests
and replay, and an HTTP chat-completions backend for live runs. The gateway
adds the cross-cutting policy: deadlines, retry with backoff for transient
transport failures, generation-based cancellation, and an audit trail of
every call. Scripted latency is logical (declared per entry), never slept,
so replay stays fast and deterministic.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from collections import deque
from dataclasses import dataclass
from typing import Callable, Protocol

import httpx

from .prompts import PromptPurpose, PromptText

logger = logging.getLogger(__name__)

MAX_RETRIES = 2
BACKOFF_START_MS = 500

DEFAULT_DFCP_TEMPERATURE = 0.7
DEFAULT_TTCP_TEMPERATURE = 0.0
DEFAULT_DFCP_DEADLINE_MS = 15_000
DEFAULT_TTCP_DEADLINE_MS = 3_000
DEFAULT_MAX_OUTPUT_CHARS = 280

API_KEY_ENV_VAR = "LLM_API_KEY"


class CompletionError(Exception):
    """Base for completion failures."""


class CompletionTimeout(CompletionError):
    """Deadline exceeded; never retried, the turn has already stalled."""


class TransportFailure(CompletionError):
    """Connection or HTTP-level failure; retryable."""


class RateLimited(CompletionError):
    """Backend pushed back; retryable."""


class CompletionCancelled(CompletionError):
    """Request generation was cancelled before the result was delivered."""


class ScriptExhausted(CompletionError):
    """A scripted queue had no entry for this request."""


class MalformedScript(ValueError):
    """Script file line is not a valid entry."""


@dataclass(frozen=True)
class CompletionRequest:
    purpose: PromptPurpose
    prompt: PromptText
    generation: int
    temperature: float = 0.0
    max_output_chars: int = DEFAULT_MAX_OUTPUT_CHARS
    deadline_ms: int = DEFAULT_DFCP_DEADLINE_MS

    def __post_init__(self) -> None:
        if self.deadline_ms <= 0:
            raise ValueError("deadline_ms must be positive")
        if self.max_output_chars <= 0:
            raise ValueError("max_output_chars must be positive")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class BackendReply:
    text: str
    latency_ms: int = 0


class CompletionBackend(Protocol):
    def complete(self, request: CompletionRequest) -> BackendReply: ...


@dataclass
class ScriptEntry:
    purpose: PromptPurpose
    output: str
    match: str | None = None
    delay_ms: int = 0


class ScriptedBackend:
    """Canned outputs consumed in order, per purpose.

    Each call takes the first queued entry whose optional `match` substring
    occurs in the prompt. An empty (or fully mismatched) queue raises
    ScriptExhausted: scripts running dry must never pass silently.
    """

    def __init__(self, entries: list[ScriptEntry] | None = None):
        self._queues: dict[PromptPurpose, deque[ScriptEntry]] = {
            PromptPurpose.DFCP: deque(),
            PromptPurpose.TTCP: deque(),
        }
        for entry in entries or []:
            self._queues[entry.purpose].append(entry)

    def queue_length(self, purpose: PromptPurpose) -> int:
        return len(self._queues[purpose])

    def complete(self, request: CompletionRequest) -> BackendReply:
        queue = self._queues[request.purpose]
        for i, entry in enumerate(queue):
            if entry.match is None or entry.match in request.prompt.body:
                del queue[i]
                return BackendReply(text=entry.output, latency_ms=entry.delay_ms)
        raise ScriptExhausted(
            f"no scripted {request.purpose.value} output left "
            f"(queue length {len(queue)})"
        )


def load_script(path: str) -> ScriptedBackend:
    """Load a JSON Lines script: one {purpose, match?, output, delay_ms?} per line."""
    entries: list[ScriptEntry] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedScript(f"line {lineno}: invalid JSON: {exc.msg}") from None
            if not isinstance(raw, dict):
                raise MalformedScript(f"line {lineno}: expected an object")
            unknown = set(raw) - {"purpose", "match", "output", "delay_ms"}
            if unknown:
                raise MalformedScript(f"line {lineno}: unknown keys {sorted(unknown)}")
            try:
                purpose = PromptPurpose(raw.get("purpose"))
            except ValueError:
                raise MalformedScript(
                    f"line {lineno}: purpose must be 'DFCP' or 'TTCP', "
                    f"got {raw.get('purpose')!r}"
                ) from None
            if "output" not in raw or not isinstance(raw["output"], str):
                raise MalformedScript(f"line {lineno}: output must be a string")
            delay = raw.get("delay_ms", 0)
            if not isinstance(delay, int) or delay < 0:
                raise MalformedScript(f"line {lineno}: delay_ms must be a non-negative int")
            match = raw.get("match")
            if match is not None and not isinstance(match, str):
                raise MalformedScript(f"line {lineno}: match must be a string")
            entries.append(
                ScriptEntry(purpose=purpose, output=raw["output"], match=match, delay_ms=delay)
            )
    return ScriptedBackend(entries)


@dataclass(frozen=True)
class HttpBackendConfig:
    base_url: str
    model: str = "gpt-4"
    api_key_env: str = API_KEY_ENV_VAR


class HttpChatBackend:
    """Chat-completions style HTTP backend.

    The whole rendered prompt travels as a single user-role message; the API
    key comes from the environment, never from config files.
    """

    def __init__(self, config: HttpBackendConfig, client: httpx.Client | None = None):
        self._config = config
        self._client = client or httpx.Client()

    def complete(self, request: CompletionRequest) -> BackendReply:
        api_key = os.environ.get(self._config.api_key_env, "")
        payload = {
            "model": self._config.model,
            "messages": [{"role": "user", "content": request.prompt.body}],
            "temperature": request.temperature,
        }
        started = time.monotonic()
        try:
            response = self._client.post(
                self._config.base_url.rstrip("/") + "/chat/completions",
                json=payload,
                headers={"Authorization": f"Bearer {api_key}"},
                timeout=request.deadline_ms / 1000.0,
            )
        except httpx.TimeoutException as exc:
            raise CompletionTimeout(str(exc)) from None
        except httpx.HTTPError as exc:
            raise TransportFailure(str(exc)) from None
        latency_ms = int((time.monotonic() - started) * 1000)
        if response.status_code == 429:
            raise RateLimited(f"HTTP 429 after {latency_ms} ms")
        if response.status_code >= 400:
            raise TransportFailure(f"HTTP {response.status_code}")
        try:
            text = response.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise TransportFailure(f"malformed completion response: {exc}") from None
        return BackendReply(text=text, latency_ms=latency_ms)


@dataclass(frozen=True)
class AuditRecord:
    generation: int
    purpose: PromptPurpose
    prompt: str
    outcome: str  # "ok" or the error class name
    output: str | None
    latency_ms: int
    attempts: int


class LlmGateway:
    """Policy wrapper around a backend: retries, deadlines, cancel, audit."""

    def __init__(
        self,
        backend: CompletionBackend,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self._backend = backend
        self._sleep = sleep
        self._lock = threading.Lock()
        self._cancelled: set[int] = set()
        self.audit_log: list[AuditRecord] = []

    def cancel(self, generation: int) -> None:
        """Cancel a generation; a late result for it is discarded."""
        with self._lock:
            self._cancelled.add(generation)

    def is_cancelled(self, generation: int) -> bool:
        with self._lock:
            return generation in self._cancelled

    def request(self, request: CompletionRequest) -> BackendReply:
        """Complete with retry policy; returns the reply with its latency.

        Transport failures and rate limits are retried at most twice with
        doubling backoff from 500 ms; timeouts are never retried. Scripted
        latencies above the deadline surface as timeouts without sleeping.
        """
        attempts = 0
        backoff_ms = BACKOFF_START_MS
        while True:
            attempts += 1
            if self.is_cancelled(request.generation):
                self._audit(request, "CompletionCancelled", None, 0, attempts)
                raise CompletionCancelled(f"generation {request.generation}")
            try:
                reply = self._backend.complete(request)
            except (TransportFailure, RateLimited) as exc:
                if attempts > MAX_RETRIES:
                    self._audit(request, type(exc).__name__, None, 0, attempts)
                    raise
                logger.debug("retrying %s after %s", request.purpose.value, exc)
                self._sleep(backoff_ms / 1000.0)
                backoff_ms *= 2
                continue
            except CompletionError as exc:
                self._audit(request, type(exc).__name__, None, 0, attempts)
                raise
            if reply.latency_ms > request.deadline_ms:
                self._audit(request, "CompletionTimeout", None, request.deadline_ms, attempts)
                raise CompletionTimeout(
                    f"{reply.latency_ms} ms exceeds deadline {request.deadline_ms} ms"
                )
            text = reply.text[: request.max_output_chars]
            if self.is_cancelled(request.generation):
                self._audit(request, "CompletionCancelled", text, reply.latency_ms, attempts)
                raise CompletionCancelled(f"generation {request.generation}")
            self._audit(request, "ok", text, reply.latency_ms, attempts)
            return BackendReply(text=text, latency_ms=reply.latency_ms)

    def complete(self, request: CompletionRequest) -> str:
        return self.request(request).text

    def output_for_generation(self, generation: int) -> str | None:
        for record in self.audit_log:
            if record.generation == generation and record.output is not None:
                return record.output
        return None

    def _audit(
        self,
        request: CompletionRequest,
        outcome: str,
        output: str | None,
        latency_ms: int,
        attempts: int,
    ) -> None:
        self.audit_log.append(
            AuditRecord(
                generation=request.generation,
                purpose=request.purpose,
                prompt=request.prompt.body,
                outcome=outcome,
                output=output,
                latency_ms=latency_ms,
                attempts=attempts,
            )
        )


@dataclass(frozen=True)
class CompletionOutcome:
    """A resolved completion as it re-enters the session loop."""

    generation: int
    purpose: PromptPurpose
    text: str | None
    error: str | None  # error class name when text is None


class CompletionService(Protocol):
    """How the session loop talks to the gateway without blocking ticks."""

    def start(self, request: CompletionRequest, now_ms: int) -> None: ...

    def poll(self, now_ms: int) -> list[CompletionOutcome]: ...

    def cancel(self, generation: int) -> None: ...


@dataclass
class _PendingLogical:
    outcome: CompletionOutcome
    resolve_at_ms: int


class LogicalCompletionService:
    """Deterministic in-process service for replay and tests.

    The backend is consulted synchronously at start(); the result is held
    until logical time reaches start + declared latency, which is where
    barge-in cancellation can still win the race.
    """

    def __init__(self, gateway: LlmGateway):
        self.gateway = gateway
        self._pending: list[_PendingLogical] = []

    def start(self, request: CompletionRequest, now_ms: int) -> None:
        try:
            reply = self.gateway.request(request)
            outcome = CompletionOutcome(
                generation=request.generation,
                purpose=request.purpose,
                text=reply.text,
                error=None,
            )
            delay = min(reply.latency_ms, request.deadline_ms)
        except CompletionTimeout:
            outcome = CompletionOutcome(
                generation=request.generation,
                purpose=request.purpose,
                text=None,
                error="CompletionTimeout",
            )
            delay = request.deadline_ms
        except CompletionError as exc:
            outcome = CompletionOutcome(
                generation=request.generation,
                purpose=request.purpose,
                text=None,
                error=type(exc).__name__,
            )
            delay = 0
        self._pending.append(
            _PendingLogical(outcome=outcome, resolve_at_ms=now_ms + delay)
        )

    def poll(self, now_ms: int) -> list[CompletionOutcome]:
        due = [p for p in self._pending if p.resolve_at_ms <= now_ms]
        self._pending = [p for p in self._pending if p.resolve_at_ms > now_ms]
        out = []
        for pending in due:
            if self.gateway.is_cancelled(pending.outcome.generation):
                continue  # discarded: cancellation won
            out.append(pending.outcome)
        return out

    def cancel(self, generation: int) -> None:
        self.gateway.cancel(generation)
        self._pending = [
            p for p in self._pending if p.outcome.generation != generation
        ]


class ThreadedCompletionService:
    """Live-mode service: each request runs on its own thread.

    Results re-enter through poll() on the session loop; anything cancelled
    in the meantime is dropped by generation check.
    """

    def __init__(self, gateway: LlmGateway, simulate_latency: bool = False):
        self.gateway = gateway
        self._simulate_latency = simulate_latency
        self._lock = threading.Lock()
        self._ready: list[CompletionOutcome] = []

    def start(self, request: CompletionRequest, now_ms: int) -> None:
        thread = threading.Thread(target=self._run, args=(request,), daemon=True)
        thread.start()

    def _run(self, request: CompletionRequest) -> None:
        try:
            reply = self.gateway.request(request)
            if self._simulate_latency and reply.latency_ms:
                time.sleep(reply.latency_ms / 1000.0)
            outcome = CompletionOutcome(
                generation=request.generation,
                purpose=request.purpose,
                text=reply.text,
                error=None,
            )
        except CompletionError as exc:
            outcome = CompletionOutcome(
                generation=request.generation,
                purpose=request.purpose,
                text=None,
                error=type(exc).__name__,
            )
        with self._lock:
            self._ready.append(outcome)

    def poll(self, now_ms: int) -> list[CompletionOutcome]:
        with self._lock:
            ready, self._ready = self._ready, []
        return [o for o in ready if not self.gateway.is_cancelled(o.generation)]

    def cancel(self, generation: int) -> None:
        self.gateway.cancel(generation)
