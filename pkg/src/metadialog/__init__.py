"""Scenario-driven dialogue engine with LLM meta-control.

The engine prompts a language model both to generate utterances and to emit
single-digit control commands; those digits drive dialogue-flow transitions
and turn-taking decisions inside a rule-based phase machine with a hard
session time budget, a simulated speech recognizer, and a live chat console.
"""

from .scenario import (
    CommandSpec,
    EffectKind,
    HoldFloor,
    InvariantViolation,
    MalformedDocument,
    Scenario,
    SchemaViolation,
    TakeTurn,
    Task,
    TurnClassSpec,
    Violation,
    parse_scenario,
    parse_scenario_file,
    serialize_scenario,
    validate_scenario,
)
from .session import (
    ReplaySummary,
    Session,
    SessionConfig,
    SessionEvent,
    create_session,
    replay_run,
    run_session,
)
from .state import Phase, SessionState, Speaker, TransitionCause, Turn

__all__ = [
    "CommandSpec",
    "EffectKind",
    "HoldFloor",
    "InvariantViolation",
    "MalformedDocument",
    "Phase",
    "ReplaySummary",
    "Scenario",
    "SchemaViolation",
    "Session",
    "SessionConfig",
    "SessionEvent",
    "SessionState",
    "Speaker",
    "TakeTurn",
    "Task",
    "TransitionCause",
    "Turn",
    "TurnClassSpec",
    "Violation",
    "create_session",
    "parse_scenario",
    "parse_scenario_file",
    "replay_run",
    "run_session",
    "serialize_scenario",
    "validate_scenario",
]
