"""Turn-taking: floor state, speech events, and the class-to-action policy.

After every finalized user utterance the engine asks the LLM which speech
class the utterance belongs to; the scenario's class table maps that digit
to a floor action. Every failure on this path degrades to taking the turn:
a wrong barge-in is recoverable, an open-ended silence is not.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum

from .interpreter import ParseMode, parse_ttcp_output
from .llm import (
    DEFAULT_TTCP_DEADLINE_MS,
    DEFAULT_TTCP_TEMPERATURE,
    CompletionError,
    CompletionRequest,
    LlmGateway,
)
from .prompts import render_ttcp
from .scenario import HoldFloor, Scenario, TakeTurn
from .state import SessionState, Speaker

logger = logging.getLogger(__name__)

TurnDecision = HoldFloor | TakeTurn

DEFAULT_MAX_CONSECUTIVE_HOLDS = 2


class FloorState(str, Enum):
    USER_SPEAKING = "UserSpeaking"
    SYSTEM_SPEAKING = "SystemSpeaking"
    OPEN_FLOOR = "OpenFloor"
    DELIBERATING = "Deliberating"


@dataclass(frozen=True)
class AsrPartial:
    text: str
    at_ms: int


@dataclass(frozen=True)
class AsrFinal:
    text: str
    silence_ms: int
    at_ms: int


AsrEvent = AsrPartial | AsrFinal


@dataclass(frozen=True)
class TurnVerdict:
    """decide_turn result plus how it was reached, for logging."""

    decision: TurnDecision
    assigned_class: int | None = None
    breach: str | None = None


def decide_turn(
    final: AsrFinal,
    state: SessionState,
    scenario: Scenario,
    gateway: LlmGateway,
    generation: int,
    mode: ParseMode = ParseMode.LENIENT,
    deadline_ms: int = DEFAULT_TTCP_DEADLINE_MS,
) -> TurnVerdict:
    """Classify a finalized user utterance and map it to a floor action.

    Blocking variant used directly in tests and simple callers; the session
    loop runs the same render/complete/map steps through its non-blocking
    completion service. The assigned class is annotated onto the user's turn.
    Any failure (gateway error, unparseable output) falls open to TakeTurn.
    """
    history = list(state.history)
    if history and history[-1].speaker is Speaker.USER and history[-1].text == final.text:
        prior = history[:-1]
    else:
        prior = history
    prompt = render_ttcp(scenario, prior, final.text)
    request = CompletionRequest(
        purpose=prompt.purpose,
        prompt=prompt,
        generation=generation,
        temperature=DEFAULT_TTCP_TEMPERATURE,
        deadline_ms=deadline_ms,
    )
    try:
        raw = gateway.complete(request)
    except CompletionError as exc:
        logger.info("turn-take completion failed (%s); taking turn", type(exc).__name__)
        return TurnVerdict(decision=TakeTurn(), breach=type(exc).__name__)
    verdict = map_turn_class(raw, scenario)
    if verdict.assigned_class is not None:
        annotate_turn_class(state, final.text, verdict.assigned_class)
    return verdict


def map_turn_class(
    raw: str, scenario: Scenario, mode: ParseMode = ParseMode.LENIENT
) -> TurnVerdict:
    """Map a raw turn-take completion to the scenario's floor action."""
    try:
        digit = parse_ttcp_output(raw, scenario.turn_class_table, mode)
    except ValueError as exc:
        logger.info("unusable turn-take output %r (%s); taking turn", raw[:40], exc)
        return TurnVerdict(decision=TakeTurn(), breach=type(exc).__name__)
    spec = scenario.turn_class_for(digit)
    assert spec is not None  # parse_ttcp_output only returns table digits
    return TurnVerdict(decision=spec.floor_action, assigned_class=digit)


def annotate_turn_class(state: SessionState, utterance: str, digit: int) -> None:
    for turn in reversed(state.history):
        if turn.speaker is Speaker.USER and turn.text == utterance:
            turn.turn_class = digit
            return


def on_extension_elapsed(
    had_new_speech: bool,
    holds_so_far: int,
    max_consecutive_holds: int = DEFAULT_MAX_CONSECUTIVE_HOLDS,
) -> TurnDecision | None:
    """Decide what happens when a hold-floor window runs out.

    None means defer: the user spoke during the window, the recognizer keeps
    listening and the decision cycle restarts at the next final. Otherwise
    the turn is taken: one extension per utterance, and never more than
    `max_consecutive_holds` in a row regardless.
    """
    if had_new_speech:
        return None
    if holds_so_far >= max_consecutive_holds:
        return TakeTurn()
    return TakeTurn()  # single-extension policy: silence after a hold means speak


def playback_duration_ms(text: str, rate_cps: int) -> int:
    """Simulated speech duration for a system utterance."""
    if not text:
        return 0
    return math.ceil(len(text) / rate_cps) * 1000


def truncate_spoken(text: str, elapsed_ms: int, rate_cps: int) -> str:
    """The prefix actually 'spoken' when playback is aborted at elapsed_ms."""
    if elapsed_ms <= 0:
        return ""
    spoken = int(elapsed_ms * rate_cps / 1000)
    return text[:spoken]
