"""Interpretation of raw LLM completions under the single-digit protocol.

A flow completion is either an utterance to speak or a bare digit that
invokes a command; a turn-take completion must be a digit naming a speech
class. Strict mode implements the sharp contract (used in tests); lenient
mode tolerates the punctuation and option-echo noise live models produce.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum

from .scenario import CommandSpec, TurnClassSpec


class ParseMode(str, Enum):
    STRICT = "strict"
    LENIENT = "lenient"


class EmptyOutput(ValueError):
    """Completion is empty after trimming."""


class UnknownCommand(ValueError):
    """Command-shaped output names a digit absent from the command table."""

    def __init__(self, digit: int):
        self.digit = digit
        super().__init__(f"digit {digit} is not in the command table")


class Unparseable(ValueError):
    """Turn-take output is not a recognizable class digit."""


class UnknownClass(ValueError):
    """Turn-take output names a digit absent from the class table."""

    def __init__(self, digit: int):
        self.digit = digit
        super().__init__(f"digit {digit} is not in the class table")


@dataclass(frozen=True)
class Utterance:
    text: str


@dataclass(frozen=True)
class CommandInvocation:
    digit: int


DfcpOutcome = Utterance | CommandInvocation

# digit, optional trailing '.' or ':', optional echoed text
_LENIENT_SHAPE = re.compile(r"^(\d)([.:])?(?:\s+(\S.*))?$", re.DOTALL)


def _echo_matches(echo: str, description: str) -> bool:
    return description.lower().startswith(echo.strip().lower())


def classify_dfcp_output(
    raw: str,
    table: tuple[CommandSpec, ...] | list[CommandSpec],
    mode: ParseMode = ParseMode.STRICT,
) -> DfcpOutcome:
    """Classify a flow completion as a command invocation or an utterance.

    Strict: after trimming, exactly one character that is a digit from the
    table is a command; any other nonempty text is an utterance. Lenient
    additionally accepts `d.`, `d:` and a digit followed by a prefix of that
    command's description (models often echo the option line). A lone digit
    outside the table is a protocol breach, not something to speak aloud.
    """
    trimmed = raw.strip()
    if not trimmed:
        raise EmptyOutput("completion is empty after trimming")
    digits = {spec.digit for spec in table}

    if len(trimmed) == 1 and trimmed.isdigit():
        digit = int(trimmed)
        if digit not in digits:
            raise UnknownCommand(digit)
        return CommandInvocation(digit)

    if mode is ParseMode.LENIENT:
        match = _LENIENT_SHAPE.match(trimmed)
        if match:
            digit = int(match.group(1))
            punctuation, echo = match.group(2), match.group(3)
            if echo is None:
                # bare "d." / "d:" ("d" alone was handled above)
                if digit not in digits:
                    raise UnknownCommand(digit)
                return CommandInvocation(digit)
            if digit in digits:
                spec = next(s for s in table if s.digit == digit)
                if punctuation == ":" and _echo_matches(echo, spec.description):
                    return CommandInvocation(digit)

    return Utterance(trimmed)


def parse_ttcp_output(
    raw: str,
    table: tuple[TurnClassSpec, ...] | list[TurnClassSpec],
    mode: ParseMode = ParseMode.STRICT,
) -> int:
    """Extract the speech-class digit from a turn-take completion."""
    trimmed = raw.strip()
    digits = {spec.digit for spec in table}

    if len(trimmed) == 1 and trimmed.isdigit():
        digit = int(trimmed)
        if digit not in digits:
            raise UnknownClass(digit)
        return digit

    if mode is ParseMode.LENIENT and trimmed:
        match = _LENIENT_SHAPE.match(trimmed)
        if match:
            digit = int(match.group(1))
            punctuation, echo = match.group(2), match.group(3)
            if echo is None and punctuation in (".", ":"):
                if digit not in digits:
                    raise UnknownClass(digit)
                return digit
            if echo is not None and punctuation == ":" and digit in digits:
                spec = next(s for s in table if s.digit == digit)
                if _echo_matches(echo, spec.description):
                    return digit

    raise Unparseable(f"not a class digit: {trimmed[:80]!r}")
