"""HTTP + WebSocket front door for live sessions.

One asyncio tick loop per session drives the engine against the wall clock;
browser clients stream SessionEvents over a WebSocket and push keystrokes
back. The console never computes dialogue state of its own: everything it
renders comes from this event stream (schema in docs/event-schema.md).
"""

from __future__ import annotations

import asyncio
import logging
import os
import uuid
from dataclasses import dataclass, field

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse, StreamingResponse

from .asr import TypingRecognizer
from .dispatch import AssetCatalog, load_asset_catalog
from .interpreter import ParseMode
from .llm import (
    HttpBackendConfig,
    HttpChatBackend,
    LlmGateway,
    ThreadedCompletionService,
    load_script,
)
from .scenario import Scenario, parse_scenario_file
from .session import (
    PauseInput,
    Session,
    SessionConfig,
    SessionEvent,
    TranscriptWriter,
    TypingInput,
    UtteranceInput,
    transcript_header,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ServerConfig:
    scenario_path: str
    llm_spec: str = "http"  # "http" or "scripted:<path>"
    parse_mode: ParseMode = ParseMode.LENIENT
    budget_override_ms: int | None = None
    transcript_dir: str = "transcripts"
    asset_catalog_path: str | None = None
    http_base_url: str = "https://api.openai.com/v1"
    model: str = "gpt-4"
    session: SessionConfig = field(default_factory=SessionConfig)


def _build_completions(config: ServerConfig) -> ThreadedCompletionService:
    if config.llm_spec.startswith("scripted:"):
        backend = load_script(config.llm_spec.split(":", 1)[1])
        return ThreadedCompletionService(LlmGateway(backend), simulate_latency=True)
    if config.llm_spec == "http":
        backend = HttpChatBackend(
            HttpBackendConfig(base_url=config.http_base_url, model=config.model)
        )
        return ThreadedCompletionService(LlmGateway(backend))
    raise ValueError(f"unknown llm spec {config.llm_spec!r}")


class SessionRunner:
    """Owns one live session: tick task, input queue, event fan-out."""

    def __init__(self, session: Session):
        self.session = session
        self.inputs: asyncio.Queue = asyncio.Queue()
        self.subscribers: list[asyncio.Queue] = []
        self.task: asyncio.Task | None = None

    def start(self) -> None:
        self.task = asyncio.get_event_loop().create_task(self._run())

    async def _run(self) -> None:
        loop = asyncio.get_event_loop()
        tick_s = self.session.config.tick_ms / 1000.0
        started = loop.time()
        index = 0
        try:
            while not self.session.terminated:
                now_ms = index * self.session.config.tick_ms
                pending = []
                while not self.inputs.empty():
                    pending.append(self.inputs.get_nowait())
                for event in self.session.step(now_ms, pending):
                    self._broadcast(event)
                index += 1
                delay = started + index * tick_s - loop.time()
                if delay > 0:
                    await asyncio.sleep(delay)
        except Exception:
            logger.exception("session %s loop crashed", self.session.session_id)

    def _broadcast(self, event: SessionEvent) -> None:
        for queue in list(self.subscribers):
            queue.put_nowait(event)

    def subscribe(self) -> asyncio.Queue:
        queue: asyncio.Queue = asyncio.Queue()
        self.subscribers.append(queue)
        return queue

    def unsubscribe(self, queue: asyncio.Queue) -> None:
        if queue in self.subscribers:
            self.subscribers.remove(queue)


def create_app(config: ServerConfig) -> FastAPI:
    scenario: Scenario = parse_scenario_file(config.scenario_path)
    catalog = (
        load_asset_catalog(config.asset_catalog_path)
        if config.asset_catalog_path
        else AssetCatalog()
    )
    app = FastAPI(title="metadialog session service")
    runners: dict[str, SessionRunner] = {}

    @app.get("/health")
    def health() -> JSONResponse:
        return JSONResponse({"status": "ok"})

    @app.post("/sessions")
    async def create_session_endpoint() -> JSONResponse:
        session_id = uuid.uuid4().hex
        session_config = SessionConfig(
            parse_mode=config.parse_mode,
            budget_override_ms=config.budget_override_ms,
            tick_ms=config.session.tick_ms,
            speaking_rate_cps=config.session.speaking_rate_cps,
            recognizer=config.session.recognizer,
            max_consecutive_holds=config.session.max_consecutive_holds,
            llm=config.session.llm,
        )
        os.makedirs(config.transcript_dir, exist_ok=True)
        transcript_path = os.path.join(config.transcript_dir, f"{session_id}.jsonl")
        writer = TranscriptWriter(
            header=transcript_header(scenario, session_config, session_id),
            path=transcript_path,
        )
        session = Session(
            scenario=scenario,
            completions=_build_completions(config),
            source=TypingRecognizer(session_config.recognizer),
            config=session_config,
            catalog=catalog,
            writer=writer,
            session_id=session_id,
        )
        runner = SessionRunner(session)
        runners[session_id] = runner
        runner.start()
        return JSONResponse(
            {"session_id": session_id, "budget_ms": session.state.clock.budget_ms}
        )

    @app.get("/sessions/{session_id}/transcript")
    def transcript(session_id: str) -> StreamingResponse:
        runner = runners.get(session_id)
        if runner is None:
            raise HTTPException(status_code=404, detail="unknown session")
        path = runner.session.writer.path if runner.session.writer else None
        if path is None or not os.path.exists(path):
            raise HTTPException(status_code=404, detail="no transcript")

        def lines():
            with open(path, encoding="utf-8") as fh:
                yield from fh

        return StreamingResponse(lines(), media_type="application/x-ndjson")

    @app.websocket("/sessions/{session_id}/events")
    async def events_socket(websocket: WebSocket, session_id: str) -> None:
        runner = runners.get(session_id)
        if runner is None:
            await websocket.close(code=4404)
            return
        await websocket.accept()
        queue = runner.subscribe()
        # snapshot first: reconnecting clients dedupe on seq
        for event in list(runner.session.events):
            await websocket.send_json(event.to_dict())

        async def pump_outgoing() -> None:
            while True:
                event = await queue.get()
                await websocket.send_json(event.to_dict())

        sender = asyncio.get_event_loop().create_task(pump_outgoing())
        try:
            while True:
                message = await websocket.receive_json()
                kind = message.get("type")
                if kind == "typing":
                    char = str(message.get("char", ""))
                    if char:
                        runner.inputs.put_nowait(TypingInput(char=char))
                elif kind == "utterance":
                    text = str(message.get("text", ""))
                    if text:
                        runner.inputs.put_nowait(UtteranceInput(text=text))
                elif kind == "pause":
                    runner.inputs.put_nowait(PauseInput())
        except WebSocketDisconnect:
            pass
        finally:
            sender.cancel()
            runner.unsubscribe(queue)

    return app
