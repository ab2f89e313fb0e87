"""Gateway policy: scripted queues, deadlines, retries, cancellation, audit."""

import json
import time

import httpx
import pytest

from metadialog.llm import (
    CompletionCancelled,
    CompletionRequest,
    CompletionTimeout,
    HttpBackendConfig,
    HttpChatBackend,
    LlmGateway,
    LogicalCompletionService,
    MalformedScript,
    RateLimited,
    ScriptedBackend,
    ScriptExhausted,
    TransportFailure,
    load_script,
)
from metadialog.prompts import PromptPurpose, PromptText

from .conftest import dfcp, ttcp


def req(purpose=PromptPurpose.DFCP, generation=1, deadline_ms=15_000, body="prompt") -> CompletionRequest:
    return CompletionRequest(
        purpose=purpose,
        prompt=PromptText.from_body(purpose, body),
        generation=generation,
        deadline_ms=deadline_ms,
    )


def test_scripted_queue_consumed_in_order():
    gateway = LlmGateway(ScriptedBackend([dfcp("Hello!"), dfcp("0")]))
    assert gateway.complete(req(generation=1)) == "Hello!"
    assert gateway.complete(req(generation=2)) == "0"


def test_scripted_delay_beyond_deadline_times_out_without_sleeping():
    gateway = LlmGateway(ScriptedBackend([dfcp("late", delay_ms=10_000)]))
    started = time.monotonic()
    with pytest.raises(CompletionTimeout):
        gateway.complete(req(deadline_ms=2_000))
    assert time.monotonic() - started < 1.0


def test_empty_queue_raises_never_silent():
    gateway = LlmGateway(ScriptedBackend([]))
    with pytest.raises(ScriptExhausted):
        gateway.complete(req())


def test_match_keyed_entries_select_by_prompt_substring():
    backend = ScriptedBackend(
        [dfcp("plan answer", match="# Directive"), dfcp("general answer")]
    )
    gateway = LlmGateway(backend)
    assert gateway.complete(req(generation=1, body="plain prompt")) == "general answer"
    assert gateway.complete(req(generation=2, body="x\n# Directive\n  go")) == "plan answer"


def test_output_truncated_to_max_chars():
    gateway = LlmGateway(ScriptedBackend([dfcp("a" * 500)]))
    request = CompletionRequest(
        purpose=PromptPurpose.DFCP,
        prompt=PromptText.from_body(PromptPurpose.DFCP, "p"),
        generation=1,
        max_output_chars=100,
    )
    assert gateway.complete(request) == "a" * 100


# -- retry policy ---------------------------------------------------------------


class FlakyBackend:
    def __init__(self, failures, reply="ok"):
        self.failures = list(failures)
        self.reply = reply
        self.calls = 0

    def complete(self, request):
        self.calls += 1
        if self.failures:
            raise self.failures.pop(0)
        from metadialog.llm import BackendReply

        return BackendReply(text=self.reply, latency_ms=0)


def test_transport_failures_retried_twice_with_doubling_backoff():
    sleeps = []
    backend = FlakyBackend([TransportFailure("a"), TransportFailure("b")])
    gateway = LlmGateway(backend, sleep=sleeps.append)
    assert gateway.complete(req()) == "ok"
    assert backend.calls == 3
    assert sleeps == [0.5, 1.0]


def test_rate_limited_retried_then_fails_after_two_retries():
    sleeps = []
    backend = FlakyBackend([RateLimited("1"), RateLimited("2"), RateLimited("3")])
    gateway = LlmGateway(backend, sleep=sleeps.append)
    with pytest.raises(RateLimited):
        gateway.complete(req())
    assert backend.calls == 3
    assert sleeps == [0.5, 1.0]


def test_timeout_never_retried():
    sleeps = []
    gateway = LlmGateway(
        ScriptedBackend([dfcp("late", delay_ms=10_000), dfcp("never reached")]),
        sleep=sleeps.append,
    )
    with pytest.raises(CompletionTimeout):
        gateway.complete(req(deadline_ms=1_000))
    assert sleeps == []
    assert gateway.audit_log[-1].outcome == "CompletionTimeout"


def test_audit_log_counts_every_call_including_failures():
    gateway = LlmGateway(ScriptedBackend([dfcp("one")]))
    gateway.complete(req(generation=1))
    with pytest.raises(ScriptExhausted):
        gateway.complete(req(generation=2))
    assert len(gateway.audit_log) == 2
    assert [r.outcome for r in gateway.audit_log] == ["ok", "ScriptExhausted"]


# -- cancellation ---------------------------------------------------------------


def test_cancel_before_request_resolves_as_cancelled():
    gateway = LlmGateway(ScriptedBackend([dfcp("hi")]))
    gateway.cancel(5)
    with pytest.raises(CompletionCancelled):
        gateway.complete(req(generation=5))


def test_cancel_after_completion_is_noop():
    gateway = LlmGateway(ScriptedBackend([dfcp("hi")]))
    assert gateway.complete(req(generation=1)) == "hi"
    gateway.cancel(1)  # no error; result was already delivered
    assert gateway.audit_log[0].outcome == "ok"


def test_stale_result_discarded_by_logical_service():
    gateway = LlmGateway(ScriptedBackend([dfcp("in flight", delay_ms=500)]))
    service = LogicalCompletionService(gateway)
    service.start(req(generation=1), now_ms=0)
    assert service.poll(100) == []  # still in flight
    service.cancel(1)
    assert service.poll(600) == []  # resolved but discarded
    assert gateway.output_for_generation(1) == "in flight"


def test_logical_service_delivers_at_latency():
    gateway = LlmGateway(ScriptedBackend([ttcp("3", delay_ms=300)]))
    service = LogicalCompletionService(gateway)
    service.start(req(purpose=PromptPurpose.TTCP, generation=7), now_ms=1000)
    assert service.poll(1200) == []
    outcomes = service.poll(1300)
    assert len(outcomes) == 1
    assert outcomes[0].text == "3"
    assert outcomes[0].generation == 7


def test_logical_service_surfaces_timeout_at_deadline():
    gateway = LlmGateway(ScriptedBackend([dfcp("late", delay_ms=9_000)]))
    service = LogicalCompletionService(gateway)
    service.start(req(generation=1, deadline_ms=2_000), now_ms=0)
    assert service.poll(1_900) == []
    outcomes = service.poll(2_000)
    assert len(outcomes) == 1
    assert outcomes[0].text is None
    assert outcomes[0].error == "CompletionTimeout"


# -- script loading ---------------------------------------------------------------


def test_load_script_populates_queues(tmp_path):
    path = tmp_path / "script.jsonl"
    lines = [
        {"purpose": "DFCP", "output": "a"},
        {"purpose": "DFCP", "output": "b", "delay_ms": 100},
        {"purpose": "DFCP", "output": "c", "match": "# Task"},
        {"purpose": "TTCP", "output": "0"},
        {"purpose": "TTCP", "output": "3"},
    ]
    path.write_text("\n".join(json.dumps(l) for l in lines))
    backend = load_script(str(path))
    assert backend.queue_length(PromptPurpose.DFCP) == 3
    assert backend.queue_length(PromptPurpose.TTCP) == 2


def test_load_empty_script_is_valid(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    backend = load_script(str(path))
    assert backend.queue_length(PromptPurpose.DFCP) == 0
    assert backend.queue_length(PromptPurpose.TTCP) == 0


def test_load_script_rejects_unknown_purpose(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text(json.dumps({"purpose": "SING", "output": "la"}))
    with pytest.raises(MalformedScript):
        load_script(str(path))


def test_load_script_rejects_bad_lines(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text("not json")
    with pytest.raises(MalformedScript):
        load_script(str(path))
    path.write_text(json.dumps({"purpose": "DFCP"}))
    with pytest.raises(MalformedScript):
        load_script(str(path))
    path.write_text(json.dumps({"purpose": "DFCP", "output": "x", "extra": 1}))
    with pytest.raises(MalformedScript):
        load_script(str(path))


# -- HTTP backend ---------------------------------------------------------------


def test_http_backend_sends_configured_model_and_prompt(monkeypatch):
    captured = {}

    def handler(request: httpx.Request) -> httpx.Response:
        captured["json"] = json.loads(request.content)
        captured["auth"] = request.headers.get("authorization")
        captured["url"] = str(request.url)
        return httpx.Response(
            200,
            json={"choices": [{"message": {"content": "Understood."}}]},
        )

    monkeypatch.setenv("LLM_API_KEY", "secret-key")
    client = httpx.Client(transport=httpx.MockTransport(handler))
    backend = HttpChatBackend(
        HttpBackendConfig(base_url="https://llm.example/v1", model="gpt-4"),
        client=client,
    )
    reply = backend.complete(req(body="full rendered prompt"))
    assert reply.text == "Understood."
    assert captured["json"]["model"] == "gpt-4"
    assert captured["json"]["messages"] == [
        {"role": "user", "content": "full rendered prompt"}
    ]
    assert captured["auth"] == "Bearer secret-key"
    assert captured["url"].endswith("/chat/completions")


def test_http_backend_maps_errors(monkeypatch):
    monkeypatch.setenv("LLM_API_KEY", "k")

    def rate_limited(request):
        return httpx.Response(429, json={})

    backend = HttpChatBackend(
        HttpBackendConfig(base_url="https://llm.example/v1"),
        client=httpx.Client(transport=httpx.MockTransport(rate_limited)),
    )
    with pytest.raises(RateLimited):
        backend.complete(req())

    def server_error(request):
        return httpx.Response(500)

    backend = HttpChatBackend(
        HttpBackendConfig(base_url="https://llm.example/v1"),
        client=httpx.Client(transport=httpx.MockTransport(server_error)),
    )
    with pytest.raises(TransportFailure):
        backend.complete(req())

    def boom(request):
        raise httpx.ConnectError("no route")

    backend = HttpChatBackend(
        HttpBackendConfig(base_url="https://llm.example/v1"),
        client=httpx.Client(transport=httpx.MockTransport(boom)),
    )
    with pytest.raises(TransportFailure):
        backend.complete(req())
