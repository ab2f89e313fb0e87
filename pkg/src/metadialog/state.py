"""Mutable session core: phase machine, dialogue history, session clock.

Time inside the engine is logical milliseconds since session start; the
wall clock only appears in transcript metadata. SessionState is mutated by
one logical event loop per session, never concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum, IntEnum


class Phase(IntEnum):
    """Coarse dialogue stage; transitions are strictly monotone."""

    INTRODUCTION = 0
    META_CONTROLLED = 1
    CLOSING = 2
    TERMINATED = 3

    @property
    def label(self) -> str:
        return _PHASE_LABELS[self]


_PHASE_LABELS = {
    Phase.INTRODUCTION: "Introduction",
    Phase.META_CONTROLLED: "MetaControlled",
    Phase.CLOSING: "Closing",
    Phase.TERMINATED: "Terminated",
}


class TransitionCause(str, Enum):
    INTRO_DONE = "IntroDone"
    COMMAND_0 = "Command0"
    BUDGET_EXCEEDED = "BudgetExceeded"
    CLOSING_DONE = "ClosingDone"


class Speaker(str, Enum):
    USER = "User"
    SYSTEM = "System"


class TimestampRegression(ValueError):
    """A turn starts before the same speaker's previous turn ended."""


class IllegalTransition(ValueError):
    """Attempted phase regression."""


@dataclass
class Turn:
    """One completed utterance in the dialogue history.

    Timestamps are logical milliseconds since session start. The annotation
    fields are filled in after the fact: the turn-taking class assigned to a
    user turn, the command digit behind a bracketed system entry, or the
    barge-in flag on a truncated system turn.
    """

    speaker: Speaker
    text: str
    started_at: int
    ended_at: int
    turn_class: int | None = None
    command_digit: int | None = None
    barge_in: bool = False


@dataclass(frozen=True)
class SessionClock:
    """Budget bookkeeping; `started_at` is an opaque wall-clock label."""

    started_at: str
    budget_ms: int

    def __post_init__(self) -> None:
        if self.budget_ms <= 0:
            raise ValueError("budget_ms must be positive")


@dataclass
class SessionState:
    phase: Phase
    clock: SessionClock
    history: list[Turn] = field(default_factory=list)
    goal_achieved: bool = False

    def last_turn(self, speaker: Speaker) -> Turn | None:
        for turn in reversed(self.history):
            if turn.speaker is speaker:
                return turn
        return None

    def append_turn(self, turn: Turn) -> None:
        """Append a completed turn, enforcing per-speaker timestamp order."""
        if turn.started_at > turn.ended_at:
            raise TimestampRegression(
                f"turn starts at {turn.started_at} after it ends at {turn.ended_at}"
            )
        previous = self.last_turn(turn.speaker)
        if previous is not None and turn.started_at < previous.ended_at:
            raise TimestampRegression(
                f"{turn.speaker.value} turn starts at {turn.started_at} before "
                f"previous one ended at {previous.ended_at}"
            )
        self.history.append(turn)

    def transition_phase(self, to: Phase, cause: TransitionCause) -> bool:
        """Move to a later phase; returns False for the permitted no-op."""
        if to == self.phase:
            return False
        if to < self.phase:
            raise IllegalTransition(
                f"cannot regress from {self.phase.label} to {to.label}"
            )
        self.phase = to
        return True

    def check_budget(self, now_ms: int) -> bool:
        """True iff the budget is spent and the session must be forced closed."""
        return now_ms >= self.clock.budget_ms and self.phase < Phase.CLOSING
