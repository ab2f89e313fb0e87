"""Session orchestration: one tick-driven event loop per dialogue session.

The loop realizes the whole flow: a rule-scripted introduction, the
meta-controlled main phase (flow completions, command dispatch, turn-take
classification), and a rule-scripted closing entered on command 0 or when
the budget runs out. Every observable step becomes a SessionEvent that is
appended to the transcript and handed to subscribers; in replay mode the
clock, the recognizer, and the LLM are all scripted, so two runs of the same
inputs produce byte-identical transcripts.
"""

from __future__ import annotations

import hashlib
import json
import logging
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import IO, Iterable, Protocol

from .asr import (
    RecognizerConfig,
    ScriptedSpeechSource,
    SegmentClosed,
    TypingEvent,
    load_asr_script,
)
from .dispatch import AssetCatalog, ShowImages, dispatch_command
from .interpreter import (
    CommandInvocation,
    ParseMode,
    Utterance,
    classify_dfcp_output,
)
from .llm import (
    DEFAULT_DFCP_DEADLINE_MS,
    DEFAULT_DFCP_TEMPERATURE,
    DEFAULT_MAX_OUTPUT_CHARS,
    DEFAULT_TTCP_DEADLINE_MS,
    DEFAULT_TTCP_TEMPERATURE,
    CompletionOutcome,
    CompletionRequest,
    CompletionService,
    LlmGateway,
    LogicalCompletionService,
    load_script,
)
from .prompts import PromptPurpose, render_dfcp, render_ttcp
from .scenario import HoldFloor, Scenario, parse_scenario_file
from .state import (
    Phase,
    SessionClock,
    SessionState,
    Speaker,
    TransitionCause,
    Turn,
)
from .turntaking import (
    AsrFinal,
    AsrPartial,
    FloorState,
    map_turn_class,
    on_extension_elapsed,
    playback_duration_ms,
    truncate_spoken,
)

logger = logging.getLogger(__name__)

TRANSCRIPT_SCHEMA = 1
DEFAULT_TICK_MS = 100
DEFAULT_SPEAKING_RATE_CPS = 15

KIND_USER_PARTIAL = "UserPartial"
KIND_USER_FINAL = "UserFinal"
KIND_SYSTEM_START = "SystemUtteranceStart"
KIND_SYSTEM_END = "SystemUtteranceEnd"
KIND_COMMAND_ISSUED = "CommandIssued"
KIND_EFFECT_EXECUTED = "EffectExecuted"
KIND_TURN_CLASS = "TurnClassAssigned"
KIND_PHASE_CHANGED = "PhaseChanged"
KIND_BARGE_IN = "BargeIn"
KIND_PROTOCOL_BREACH = "ProtocolBreach"
KIND_SESSION_ENDED = "SessionEnded"


class StorageUnavailable(RuntimeError):
    """The transcript file could not be opened."""


@dataclass(frozen=True)
class SessionEvent:
    seq: int
    at_ms: int
    kind: str
    payload: dict

    def to_dict(self) -> dict:
        return {"seq": self.seq, "at_ms": self.at_ms, "kind": self.kind, "payload": self.payload}

    def to_json_line(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True)


@dataclass(frozen=True)
class TypingInput:
    char: str


@dataclass(frozen=True)
class UtteranceInput:
    text: str


@dataclass(frozen=True)
class PauseInput:
    """Explicit silence marker; the server-side silence timer already covers it."""


ClientInput = TypingInput | UtteranceInput | PauseInput


@dataclass(frozen=True)
class LlmParams:
    dfcp_temperature: float = DEFAULT_DFCP_TEMPERATURE
    ttcp_temperature: float = DEFAULT_TTCP_TEMPERATURE
    dfcp_deadline_ms: int = DEFAULT_DFCP_DEADLINE_MS
    ttcp_deadline_ms: int = DEFAULT_TTCP_DEADLINE_MS
    max_output_chars: int = DEFAULT_MAX_OUTPUT_CHARS


@dataclass(frozen=True)
class SessionConfig:
    parse_mode: ParseMode = ParseMode.LENIENT
    budget_override_ms: int | None = None
    tick_ms: int = DEFAULT_TICK_MS
    speaking_rate_cps: int = DEFAULT_SPEAKING_RATE_CPS
    recognizer: RecognizerConfig = field(default_factory=RecognizerConfig)
    max_consecutive_holds: int = 2
    llm: LlmParams = field(default_factory=LlmParams)

    def __post_init__(self) -> None:
        if self.tick_ms <= 0 or self.speaking_rate_cps <= 0:
            raise ValueError("tick_ms and speaking_rate_cps must be positive")
        if self.budget_override_ms is not None and self.budget_override_ms <= 0:
            raise ValueError("budget_override_ms must be positive")

    def config_hash(self, scenario: Scenario) -> str:
        canonical = json.dumps(
            {
                "scenario_id": scenario.id,
                "parse_mode": self.parse_mode.value,
                "budget_ms": self.budget_override_ms or scenario.budget_ms(),
                "tick_ms": self.tick_ms,
                "speaking_rate_cps": self.speaking_rate_cps,
                "endpoint_ms": self.recognizer.endpoint_ms,
                "partial_interval_ms": self.recognizer.partial_interval_ms,
                "max_consecutive_holds": self.max_consecutive_holds,
            },
            sort_keys=True,
        )
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


class SpeechSource(Protocol):
    def tick(self, now_ms: int, floor_open: bool = True) -> list: ...

    def extend_endpoint(self, extra_ms: int) -> None: ...

    def clear_extension(self) -> None: ...

    def close_segment(self) -> None: ...

    def consume_activity(self) -> bool: ...


class TranscriptWriter:
    """Append-only JSON Lines transcript: one metadata header, then events.

    Write failures set a sticky degraded flag instead of killing the session;
    the flag is reported in the SessionEnded payload.
    """

    def __init__(
        self,
        header: dict,
        path: str | None = None,
        stream: IO[str] | None = None,
    ):
        self.path = path
        self.degraded = False
        self._stream: IO[str] | None = stream
        if path is not None:
            try:
                self._stream = open(path, "w", encoding="utf-8")
            except OSError as exc:
                raise StorageUnavailable(f"cannot open transcript {path}: {exc}") from None
        if self._stream is not None:
            self._write_line(json.dumps(header, ensure_ascii=False, sort_keys=True))

    def _write_line(self, line: str) -> None:
        if self._stream is None:
            return
        try:
            self._stream.write(line + "\n")
        except (OSError, ValueError):
            self.degraded = True

    def write_event(self, event: SessionEvent) -> None:
        self._write_line(event.to_json_line())

    def flush(self) -> None:
        if self._stream is None:
            return
        try:
            self._stream.flush()
        except (OSError, ValueError):
            self.degraded = True

    def close(self) -> None:
        if self._stream is None or self.path is None:
            return
        try:
            self._stream.close()
        except OSError:
            self.degraded = True


@dataclass
class _Pending:
    generation: int
    purpose: PromptPurpose
    utterance: str | None = None  # TTCP: the utterance being classified
    directive: str | None = None  # DFCP: injected follow-up directive
    retried: bool = False


@dataclass
class _Hold:
    until_ms: int
    had_new_speech: bool = False


@dataclass
class _Playback:
    text: str
    source: str  # intro | meta | clarify | closing
    started_at: int
    ends_at: int


class Session:
    """One dialogue session; `step` is the only way time advances."""

    def __init__(
        self,
        scenario: Scenario,
        completions: CompletionService,
        source: SpeechSource,
        config: SessionConfig | None = None,
        catalog: AssetCatalog | None = None,
        writer: TranscriptWriter | None = None,
        session_id: str | None = None,
    ):
        self.scenario = scenario
        self.completions = completions
        self.source = source
        self.config = config or SessionConfig()
        self.catalog = catalog or AssetCatalog()
        self.session_id = session_id or uuid.uuid4().hex
        budget_ms = self.config.budget_override_ms or scenario.budget_ms()
        self.state = SessionState(
            phase=Phase.INTRODUCTION,
            clock=SessionClock(
                started_at=datetime.now(timezone.utc).isoformat(),
                budget_ms=budget_ms,
            ),
        )
        self.floor = FloorState.OPEN_FLOOR
        self.writer = writer
        self.events: list[SessionEvent] = []
        self._seq = 0
        self._generation = 0
        self._pending: _Pending | None = None
        self._hold: _Hold | None = None
        self._consecutive_holds = 0
        self._playback: _Playback | None = None
        self._intro_index = 0
        self._closing_index = 0
        self._intro_done = False
        self._greeting_received = False
        self._user_segment_started: int | None = None
        self.command_counts: dict[int, int] = {}
        self.barge_in_count = 0
        self.breach_count = 0
        self.terminated_at_ms: int | None = None
        self._out: list[SessionEvent] | None = None

    # -- public surface -------------------------------------------------------

    @property
    def terminated(self) -> bool:
        return self.state.phase is Phase.TERMINATED

    def step(self, now_ms: int, inputs: Iterable[ClientInput] = ()) -> list[SessionEvent]:
        """Advance the session to `now_ms`, applying queued client inputs.

        One call per engine tick. Returns the events emitted during this tick
        (already persisted).
        """
        if self.terminated:
            return []
        out: list[SessionEvent] = []
        self._out = out

        # 1. hard budget check
        if self.state.check_budget(now_ms):
            self._enter_closing(TransitionCause.BUDGET_EXCEEDED, now_ms)

        # 2. client inputs into the recognizer
        for item in inputs:
            self._apply_input(item, now_ms)

        # 3. recognizer tick; barge-in arbitration before event handling
        floor_open = self.floor in (FloorState.OPEN_FLOOR, FloorState.USER_SPEAKING)
        asr_events = self.source.tick(now_ms, floor_open)
        if self.source.consume_activity():
            self._on_speech_activity(now_ms)
        for event in asr_events:
            if isinstance(event, AsrPartial):
                self._on_partial(event)
            else:
                self._on_final(event, now_ms)

        # 4. completion results (settled synchronously in replay, so keep
        #    polling until the tick quiesces)
        for _ in range(8):
            outcomes = self.completions.poll(now_ms)
            if not outcomes:
                break
            for outcome in outcomes:
                self._on_completion(outcome, now_ms)

        # 5. hold-floor window expiry
        if self._hold is not None and now_ms >= self._hold.until_ms:
            self._resolve_hold(now_ms)

        # 6. playback progress and rule-scripted lines
        if self._playback is not None and now_ms >= self._playback.ends_at:
            self._finish_playback(now_ms)
        self._drive_scripts(now_ms)

        # 7. introduction hand-off
        self._maybe_enter_meta(now_ms)

        if self.writer is not None:
            self.writer.flush()
        self._out = None
        return out

    # -- event plumbing --------------------------------------------------------

    def _emit(self, kind: str, at_ms: int, payload: dict) -> SessionEvent:
        event = SessionEvent(seq=self._seq, at_ms=at_ms, kind=kind, payload=payload)
        self._seq += 1
        self.events.append(event)
        if self.writer is not None:
            self.writer.write_event(event)
        if self._out is not None:
            self._out.append(event)
        return event

    # -- inputs and speech -------------------------------------------------------

    def _apply_input(self, item: ClientInput, now_ms: int) -> None:
        push_typing = getattr(self.source, "push_typing", None)
        push_utterance = getattr(self.source, "push_utterance", None)
        try:
            if isinstance(item, TypingInput) and push_typing is not None:
                push_typing(TypingEvent(char=item.char, at_ms=now_ms))
            elif isinstance(item, UtteranceInput) and push_utterance is not None:
                push_utterance(item.text, now_ms)
        except SegmentClosed:
            logger.debug("dropping input while segment closed (phase %s)", self.state.phase.label)

    def _on_speech_activity(self, now_ms: int) -> None:
        if self._user_segment_started is None:
            self._user_segment_started = now_ms
        if self._hold is not None:
            self._hold.had_new_speech = True
        if self.floor is FloorState.OPEN_FLOOR:
            self.floor = FloorState.USER_SPEAKING
        elif self.floor in (FloorState.SYSTEM_SPEAKING, FloorState.DELIBERATING):
            self._handle_barge_in(now_ms)

    def _on_partial(self, event: AsrPartial) -> None:
        self._emit(KIND_USER_PARTIAL, event.at_ms, {"text": event.text})

    def _on_final(self, event: AsrFinal, now_ms: int) -> None:
        ended_at = max(0, event.at_ms - event.silence_ms)
        started_at = self._user_segment_started
        if started_at is None or started_at > ended_at:
            started_at = ended_at
        self._user_segment_started = None
        turn = Turn(
            speaker=Speaker.USER,
            text=event.text,
            started_at=started_at,
            ended_at=ended_at,
        )
        self.state.append_turn(turn)
        self._emit(
            KIND_USER_FINAL,
            event.at_ms,
            {"text": event.text, "silence_ms": event.silence_ms},
        )
        if self._hold is not None:
            # a fresh final restarts the decision cycle
            self._hold = None
            self.source.clear_extension()

        if self.state.phase is Phase.INTRODUCTION:
            self._greeting_received = True
            self.floor = FloorState.OPEN_FLOOR
        elif self.state.phase is Phase.META_CONTROLLED:
            self._start_ttcp(event, now_ms)
        else:
            self.floor = FloorState.OPEN_FLOOR

    # -- barge-in ---------------------------------------------------------------

    def _handle_barge_in(self, now_ms: int) -> None:
        self.barge_in_count += 1
        if self.floor is FloorState.SYSTEM_SPEAKING and self._playback is not None:
            playback = self._playback
            spoken = truncate_spoken(
                playback.text, now_ms - playback.started_at, self.config.speaking_rate_cps
            )
            self._emit(
                KIND_BARGE_IN,
                now_ms,
                {
                    "during": "SystemSpeaking",
                    "truncated_text": spoken,
                    "spoken_chars": len(spoken),
                },
            )
            self._emit(KIND_SYSTEM_END, now_ms, {"text": spoken, "aborted": True})
            if spoken:
                self.state.append_turn(
                    Turn(
                        speaker=Speaker.SYSTEM,
                        text=spoken,
                        started_at=playback.started_at,
                        ended_at=now_ms,
                        barge_in=True,
                    )
                )
            self._playback = None
        elif self.floor is FloorState.DELIBERATING and self._pending is not None:
            pending = self._pending
            self.completions.cancel(pending.generation)
            self._emit(
                KIND_BARGE_IN,
                now_ms,
                {
                    "during": "Deliberating",
                    "cancelled_generation": pending.generation,
                    "cancelled_purpose": pending.purpose.value,
                },
            )
            self._pending = None
        self.floor = FloorState.USER_SPEAKING

    # -- completions --------------------------------------------------------------

    def _next_generation(self) -> int:
        self._generation += 1
        return self._generation

    def _start_ttcp(self, final: AsrFinal, now_ms: int) -> None:
        prior = self.state.history[:-1]
        prompt = render_ttcp(self.scenario, prior, final.text)
        generation = self._next_generation()
        self._pending = _Pending(
            generation=generation, purpose=PromptPurpose.TTCP, utterance=final.text
        )
        self.floor = FloorState.DELIBERATING
        self.completions.start(
            CompletionRequest(
                purpose=PromptPurpose.TTCP,
                prompt=prompt,
                generation=generation,
                temperature=self.config.llm.ttcp_temperature,
                max_output_chars=self.config.llm.max_output_chars,
                deadline_ms=self.config.llm.ttcp_deadline_ms,
            ),
            now_ms,
        )

    def _start_dfcp(
        self, now_ms: int, directive: str | None = None, retried: bool = False
    ) -> None:
        self._consecutive_holds = 0
        prompt = render_dfcp(self.scenario, self.state.history, directive)
        generation = self._next_generation()
        self._pending = _Pending(
            generation=generation,
            purpose=PromptPurpose.DFCP,
            directive=directive,
            retried=retried,
        )
        self.floor = FloorState.DELIBERATING
        self.completions.start(
            CompletionRequest(
                purpose=PromptPurpose.DFCP,
                prompt=prompt,
                generation=generation,
                temperature=self.config.llm.dfcp_temperature,
                max_output_chars=self.config.llm.max_output_chars,
                deadline_ms=self.config.llm.dfcp_deadline_ms,
            ),
            now_ms,
        )

    def _on_completion(self, outcome: CompletionOutcome, now_ms: int) -> None:
        pending = self._pending
        if pending is None or outcome.generation != pending.generation:
            logger.debug("discarding stale completion generation %d", outcome.generation)
            return
        if self.state.phase >= Phase.CLOSING:
            return
        if outcome.purpose is PromptPurpose.TTCP:
            self._on_ttcp_outcome(outcome, pending, now_ms)
        else:
            self._on_dfcp_outcome(outcome, pending, now_ms)

    def _on_ttcp_outcome(
        self, outcome: CompletionOutcome, pending: _Pending, now_ms: int
    ) -> None:
        self._pending = None
        if outcome.text is None:
            self._breach(PromptPurpose.TTCP, outcome.error or "error", None, "take_turn", now_ms)
            self._start_dfcp(now_ms)
            return
        verdict = map_turn_class(outcome.text, self.scenario, self.config.parse_mode)
        if verdict.breach is not None:
            self._breach(PromptPurpose.TTCP, verdict.breach, outcome.text, "take_turn", now_ms)
            self._start_dfcp(now_ms)
            return
        assert verdict.assigned_class is not None
        if pending.utterance is not None:
            for turn in reversed(self.state.history):
                if turn.speaker is Speaker.USER and turn.text == pending.utterance:
                    turn.turn_class = verdict.assigned_class
                    break
        decision = verdict.decision
        payload: dict = {"digit": verdict.assigned_class}
        if isinstance(decision, HoldFloor):
            payload["action"] = "HoldFloor"
            payload["extension_ms"] = decision.extension_ms
        else:
            payload["action"] = "TakeTurn"
        self._emit(KIND_TURN_CLASS, now_ms, payload)
        if isinstance(decision, HoldFloor):
            self._consecutive_holds += 1
            self._hold = _Hold(until_ms=now_ms + decision.extension_ms)
            self.source.extend_endpoint(decision.extension_ms)
            self.floor = FloorState.USER_SPEAKING
        else:
            self._start_dfcp(now_ms)

    def _on_dfcp_outcome(
        self, outcome: CompletionOutcome, pending: _Pending, now_ms: int
    ) -> None:
        self._pending = None
        if outcome.text is None:
            self._breach(PromptPurpose.DFCP, outcome.error or "error", None, "skip_turn", now_ms)
            self.floor = FloorState.OPEN_FLOOR
            return
        try:
            result = classify_dfcp_output(
                outcome.text, self.scenario.command_table, self.config.parse_mode
            )
        except ValueError as exc:
            recovery = "skip_turn" if pending.retried else "re_request"
            self._breach(PromptPurpose.DFCP, type(exc).__name__, outcome.text, recovery, now_ms)
            if pending.retried:
                self.floor = FloorState.OPEN_FLOOR
            else:
                self._start_dfcp(now_ms, directive=pending.directive, retried=True)
            return
        if isinstance(result, Utterance):
            self._start_playback(result.text, "meta", now_ms)
        else:
            self._execute_command(result, outcome.text, now_ms)

    def _execute_command(self, cmd: CommandInvocation, raw: str, now_ms: int) -> None:
        self._emit(KIND_COMMAND_ISSUED, now_ms, {"digit": cmd.digit, "raw": raw})
        self.command_counts[cmd.digit] = self.command_counts.get(cmd.digit, 0) + 1
        self.state.append_turn(
            Turn(
                speaker=Speaker.SYSTEM,
                text=f"[command {cmd.digit} executed]",
                started_at=now_ms,
                ended_at=now_ms,
                command_digit=cmd.digit,
            )
        )
        result = dispatch_command(cmd, self.state, self.scenario, self.catalog)
        for effect in result.effects:
            payload: dict = {"effect": type(effect).__name__}
            if isinstance(effect, ShowImages):
                payload["assets"] = [
                    {"spot_name": a.spot_name, "uri": a.uri, "caption": a.caption}
                    for a in effect.assets
                ]
            if result.followup_directive is not None:
                payload["directive"] = result.followup_directive
            self._emit(KIND_EFFECT_EXECUTED, now_ms, payload)
        if result.goal_achieved:
            self.state.goal_achieved = True
        if result.phase_to is Phase.CLOSING:
            self._enter_closing(TransitionCause.COMMAND_0, now_ms)
            return
        if result.clarify_line is not None:
            self._start_playback(result.clarify_line, "clarify", now_ms)
        elif result.request_followup:
            self._start_dfcp(now_ms, directive=result.followup_directive)
        else:
            self.floor = FloorState.OPEN_FLOOR

    def _breach(
        self,
        purpose: PromptPurpose,
        reason: str,
        raw: str | None,
        recovery: str,
        now_ms: int,
    ) -> None:
        self.breach_count += 1
        self._emit(
            KIND_PROTOCOL_BREACH,
            now_ms,
            {"purpose": purpose.value, "reason": reason, "raw": raw, "recovery": recovery},
        )

    # -- hold-floor windows -------------------------------------------------------

    def _resolve_hold(self, now_ms: int) -> None:
        assert self._hold is not None
        decision = on_extension_elapsed(
            self._hold.had_new_speech,
            self._consecutive_holds,
            self.config.max_consecutive_holds,
        )
        self._hold = None
        self.source.clear_extension()
        if decision is None:
            return  # defer: the user went on speaking; next final restarts the cycle
        self._start_dfcp(now_ms)

    # -- playback and scripted phases ----------------------------------------------

    def _start_playback(self, text: str, source_tag: str, now_ms: int) -> None:
        duration = playback_duration_ms(text, self.config.speaking_rate_cps)
        self._emit(
            KIND_SYSTEM_START,
            now_ms,
            {"text": text, "source": source_tag, "duration_ms": duration},
        )
        self._playback = _Playback(
            text=text, source=source_tag, started_at=now_ms, ends_at=now_ms + duration
        )
        self.floor = FloorState.SYSTEM_SPEAKING

    def _finish_playback(self, now_ms: int) -> None:
        playback = self._playback
        assert playback is not None
        self._playback = None
        self._emit(KIND_SYSTEM_END, now_ms, {"text": playback.text, "aborted": False})
        self.state.append_turn(
            Turn(
                speaker=Speaker.SYSTEM,
                text=playback.text,
                started_at=playback.started_at,
                ended_at=now_ms,
            )
        )
        self.floor = FloorState.OPEN_FLOOR

    def _abort_playback(self, now_ms: int) -> None:
        playback = self._playback
        assert playback is not None
        spoken = truncate_spoken(
            playback.text, now_ms - playback.started_at, self.config.speaking_rate_cps
        )
        self._emit(KIND_SYSTEM_END, now_ms, {"text": spoken, "aborted": True})
        if spoken:
            self.state.append_turn(
                Turn(
                    speaker=Speaker.SYSTEM,
                    text=spoken,
                    started_at=playback.started_at,
                    ended_at=now_ms,
                )
            )
        self._playback = None

    def _drive_scripts(self, now_ms: int) -> None:
        if self._playback is not None or self.terminated:
            return
        if self.state.phase is Phase.INTRODUCTION and not self._intro_done:
            if self.floor is not FloorState.OPEN_FLOOR:
                return
            if self._intro_index < len(self.scenario.intro_script):
                line = self.scenario.intro_script[self._intro_index]
                self._intro_index += 1
                self._start_playback(line, "intro", now_ms)
            else:
                self._intro_done = True
        elif self.state.phase is Phase.CLOSING:
            if self._closing_index < len(self.scenario.closing_script):
                line = self.scenario.closing_script[self._closing_index]
                self._closing_index += 1
                self._start_playback(line, "closing", now_ms)
            else:
                self._terminate(now_ms)

    def _maybe_enter_meta(self, now_ms: int) -> None:
        if self.state.phase is not Phase.INTRODUCTION:
            return
        if self._playback is not None:
            return
        if self._intro_index >= len(self.scenario.intro_script):
            self._intro_done = True
        if not (self._intro_done and self._greeting_received):
            return
        self.state.transition_phase(Phase.META_CONTROLLED, TransitionCause.INTRO_DONE)
        self._emit(
            KIND_PHASE_CHANGED,
            now_ms,
            {"phase": Phase.META_CONTROLLED.label, "cause": TransitionCause.INTRO_DONE.value},
        )
        history = self.state.history
        if history and history[-1].speaker is Speaker.USER and self.floor in (
            FloorState.OPEN_FLOOR,
        ):
            # the greeting is still unanswered: respond to it now
            self._start_dfcp(now_ms)

    # -- phase endings ---------------------------------------------------------------

    def _enter_closing(self, cause: TransitionCause, now_ms: int) -> None:
        if self._pending is not None:
            self.completions.cancel(self._pending.generation)
            self._pending = None
        if self._hold is not None:
            self._hold = None
            self.source.clear_extension()
        if self._playback is not None:
            self._abort_playback(now_ms)
        self.state.transition_phase(Phase.CLOSING, cause)
        self._emit(
            KIND_PHASE_CHANGED,
            now_ms,
            {"phase": Phase.CLOSING.label, "cause": cause.value},
        )
        self.source.close_segment()
        self.floor = FloorState.OPEN_FLOOR

    def _terminate(self, now_ms: int) -> None:
        self.state.transition_phase(Phase.TERMINATED, TransitionCause.CLOSING_DONE)
        self.terminated_at_ms = now_ms
        self._emit(
            KIND_PHASE_CHANGED,
            now_ms,
            {"phase": Phase.TERMINATED.label, "cause": TransitionCause.CLOSING_DONE.value},
        )
        degraded = self.writer.degraded if self.writer is not None else False
        self._emit(
            KIND_SESSION_ENDED,
            now_ms,
            {
                "final_phase": Phase.TERMINATED.label,
                "command_counts": {str(d): c for d, c in sorted(self.command_counts.items())},
                "barge_in_count": self.barge_in_count,
                "breach_count": self.breach_count,
                "goal_achieved": self.state.goal_achieved,
                "persistence_degraded": degraded,
            },
        )
        if self.writer is not None:
            self.writer.flush()
            self.writer.close()


# -- construction and replay ---------------------------------------------------------


def transcript_header(scenario: Scenario, config: SessionConfig, session_id: str) -> dict:
    return {
        "transcript_schema": TRANSCRIPT_SCHEMA,
        "scenario_id": scenario.id,
        "session_id": session_id,
        "config_hash": config.config_hash(scenario),
        "created_at": datetime.now(timezone.utc).isoformat(),
    }


def create_session(
    scenario: Scenario,
    completions: CompletionService,
    source: SpeechSource,
    config: SessionConfig | None = None,
    catalog: AssetCatalog | None = None,
    transcript_path: str | None = None,
) -> Session:
    """Build a ready session; opens the transcript when a path is given."""
    config = config or SessionConfig()
    session_id = uuid.uuid4().hex
    writer = None
    if transcript_path is not None:
        writer = TranscriptWriter(
            header=transcript_header(scenario, config, session_id),
            path=transcript_path,
        )
    return Session(
        scenario=scenario,
        completions=completions,
        source=source,
        config=config,
        catalog=catalog,
        writer=writer,
        session_id=session_id,
    )


@dataclass(frozen=True)
class ReplaySummary:
    final_phase: str
    command_counts: dict[int, int]
    barge_in_count: int
    breach_count: int
    goal_achieved: bool
    event_count: int
    terminated_at_ms: int | None
    transcript_path: str | None

    def format(self) -> str:
        commands = ", ".join(f"{d}:{c}" for d, c in sorted(self.command_counts.items())) or "none"
        return (
            f"final phase: {self.final_phase}\n"
            f"commands: {commands}\n"
            f"barge-ins: {self.barge_in_count}\n"
            f"protocol breaches: {self.breach_count}\n"
            f"goal achieved: {self.goal_achieved}\n"
            f"events: {self.event_count}\n"
            f"terminated at: {self.terminated_at_ms} ms"
        )


def run_session(session: Session, hard_cap_ms: int | None = None) -> list[SessionEvent]:
    """Drive a session with the scripted clock until it terminates."""
    tick = session.config.tick_ms
    if hard_cap_ms is None:
        closing_ms = sum(
            playback_duration_ms(line, session.config.speaking_rate_cps)
            for line in session.scenario.closing_script
        )
        hard_cap_ms = session.state.clock.budget_ms + closing_ms + 60_000
    events: list[SessionEvent] = []
    now = 0
    while not session.terminated and now <= hard_cap_ms:
        events.extend(session.step(now))
        now += tick
    return events


def replay_run(
    scenario_path: str,
    llm_script_path: str,
    asr_script_path: str | None = None,
    budget_ms: int | None = None,
    out_path: str | None = None,
    config: SessionConfig | None = None,
) -> tuple[ReplaySummary, list[SessionEvent]]:
    """Headless deterministic run from scripted inputs; returns the summary."""
    scenario = parse_scenario_file(scenario_path)
    base = config or SessionConfig()
    if budget_ms is not None:
        base = SessionConfig(
            parse_mode=base.parse_mode,
            budget_override_ms=budget_ms,
            tick_ms=base.tick_ms,
            speaking_rate_cps=base.speaking_rate_cps,
            recognizer=base.recognizer,
            max_consecutive_holds=base.max_consecutive_holds,
            llm=base.llm,
        )
    gateway = LlmGateway(load_script(llm_script_path))
    completions = LogicalCompletionService(gateway)
    entries = load_asr_script(asr_script_path) if asr_script_path else []
    source = ScriptedSpeechSource(entries, config=base.recognizer)
    session = create_session(
        scenario=scenario,
        completions=completions,
        source=source,
        config=base,
        transcript_path=out_path,
    )
    events = run_session(session)
    summary = ReplaySummary(
        final_phase=session.state.phase.label,
        command_counts=dict(session.command_counts),
        barge_in_count=session.barge_in_count,
        breach_count=session.breach_count,
        goal_achieved=session.state.goal_achieved,
        event_count=len(events),
        terminated_at_ms=session.terminated_at_ms,
        transcript_path=out_path,
    )
    return summary, events
