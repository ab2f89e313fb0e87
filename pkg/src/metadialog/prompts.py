"""Deterministic prompt rendering for the two meta-control prompts.

Both renderers are pure functions of (scenario, history, extras): identical
inputs produce byte-identical bodies. Long items wrap at a fixed column so
the rendered prompts keep the narrow, list-heavy shape the scenario format
assumes; continuation lines are indented two extra spaces so scanners can
tell items from wrapped tails.
"""

from __future__ import annotations

import textwrap
from dataclasses import dataclass
from enum import Enum

from .scenario import Scenario
from .state import Speaker, Turn

WRAP_WIDTH = 44
_ITEM_INDENT = "  "
_CONT_INDENT = "    "

USER_LABEL = "Customer"
SYSTEM_LABEL = "You"

DFCP_COMMAND_PREAMBLE = (
    'Before you speak, always decide whether or not to execute the following "Command-List."',
    "If you think it is necessary, select a command from the list and output only a single digit number.",
    "The command is automatically executed when a single digit number is output.",
)

TTCP_LEAD = "The following conditions must be obeyed."
TTCP_CONSTRAINTS = (
    "The customer has spoken, but may be about to continue speaking.",
    "Decide whether the customer will continue speaking.",
    "Select one option from the list below.",
)
TTCP_OUTPUT_CONDITION = "Output a single digit number only."


class PromptPurpose(str, Enum):
    DFCP = "DFCP"
    TTCP = "TTCP"


class EmptyUtterance(ValueError):
    """The pending user utterance for a turn-take prompt is empty."""


@dataclass(frozen=True)
class PromptText:
    """A rendered prompt body plus its exact size measurements."""

    purpose: PromptPurpose
    body: str
    line_count: int
    char_count: int

    def __post_init__(self) -> None:
        lines = self.body.count("\n") + 1
        if self.line_count != lines or self.char_count != len(self.body):
            raise ValueError("prompt size fields do not match body")

    @classmethod
    def from_body(cls, purpose: PromptPurpose, body: str) -> "PromptText":
        return cls(
            purpose=purpose,
            body=body,
            line_count=body.count("\n") + 1,
            char_count=len(body),
        )


def _item(text: str, prefix: str = "") -> list[str]:
    wrapped = textwrap.wrap(
        prefix + text,
        width=WRAP_WIDTH,
        initial_indent=_ITEM_INDENT,
        subsequent_indent=_CONT_INDENT,
        break_long_words=False,
        break_on_hyphens=False,
    )
    return wrapped or [_ITEM_INDENT + prefix.rstrip()]


def _history_lines(history: list[Turn] | tuple[Turn, ...], window: int) -> list[str]:
    lines: list[str] = []
    for turn in list(history)[-window:]:
        label = USER_LABEL if turn.speaker is Speaker.USER else SYSTEM_LABEL
        lines.extend(_item(turn.text, prefix=f"{label}: "))
    return lines


def render_dfcp(
    scenario: Scenario,
    history: list[Turn] | tuple[Turn, ...],
    directive: str | None = None,
) -> PromptText:
    """Render the dialogue-flow prompt: tasks, command list, history."""
    lines: list[str] = []

    lines.append("# Constraints")
    for constraint in scenario.constraints:
        lines.extend(_item(constraint))

    lines.append("# Task")
    for task in scenario.tasks:
        lines.extend(_item(task.instruction, prefix=f"{task.ordinal}: "))

    lines.append("# Requirements for sightseeing spots")
    for requirement in scenario.spot_requirements:
        lines.extend(_item(requirement))

    for sentence in DFCP_COMMAND_PREAMBLE:
        lines.extend(_item(sentence))

    lines.append("# Command-List")
    for command in scenario.command_table:
        lines.extend(_item(command.description, prefix=f"{command.digit}: "))

    lines.append('# When to execute the "Command-List"')
    for note in scenario.command_timing_notes:
        lines.extend(_item(note))

    lines.append("# Dialog History")
    lines.extend(_history_lines(history, scenario.history_window))

    if directive is not None:
        lines.append("# Directive")
        lines.extend(_item(directive))

    return PromptText.from_body(PromptPurpose.DFCP, "\n".join(lines))


def render_ttcp(
    scenario: Scenario,
    history: list[Turn] | tuple[Turn, ...],
    latest_user_utterance: str,
) -> PromptText:
    """Render the turn-take prompt around the still-pending user utterance."""
    if not latest_user_utterance.strip():
        raise EmptyUtterance("latest user utterance must be nonempty")

    lines: list[str] = [TTCP_LEAD]

    lines.append("# Constraints")
    for constraint in TTCP_CONSTRAINTS:
        lines.extend(_item(constraint))

    lines.append("# Output condition")
    lines.extend(_item(TTCP_OUTPUT_CONDITION))

    lines.append("# Dialog History")
    lines.extend(_history_lines(history, scenario.history_window))
    lines.extend(_item(latest_user_utterance, prefix=f"{USER_LABEL}: "))

    lines.append("# List of Customer Speech Types")
    for cls in scenario.turn_class_table:
        lines.extend(_item(cls.description, prefix=f"{cls.digit}: "))

    return PromptText.from_body(PromptPurpose.TTCP, "\n".join(lines))
