"""Declarative scenario documents: parsing, validation, serialization.

A scenario is the single source of truth for one dialogue product: the task
sequence, the digit-indexed command table, the turn-taking class table, the
rule-scripted introduction/closing lines, and the session time budget.
Scenarios are plain JSON files (see docs/scenario-schema.md) so that prompts
can be rendered from data instead of being hand-written.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Any

SCHEMA_VERSION = 1

_TOP_LEVEL_KEYS = {
    "schema",
    "id",
    "title",
    "constraints",
    "tasks",
    "spot_requirements",
    "command_table",
    "command_timing_notes",
    "turn_class_table",
    "intro_script",
    "closing_script",
    "session_budget_s",
    "history_window",
}


class ScenarioError(ValueError):
    """Base for scenario document failures; carries the offending path."""

    def __init__(self, path: str, message: str):
        self.path = path
        self.reason = message
        super().__init__(f"{path}: {message}")


class MalformedDocument(ScenarioError):
    """The document is not well-formed JSON."""


class SchemaViolation(ScenarioError):
    """A field is missing, unknown, or of the wrong shape."""


class InvariantViolation(ScenarioError):
    """The document is well-shaped but breaks a scenario invariant."""


@dataclass(frozen=True)
class Violation:
    """One invariant breach, as data (used by validate_scenario)."""

    path: str
    message: str


class EffectKind(str, Enum):
    END_DIALOGUE = "EndDialogue"
    FINALIZE_PLAN = "FinalizePlan"
    SHOW_IMAGES = "ShowImages"
    PROPOSE_PLAN = "ProposePlan"


@dataclass(frozen=True)
class HoldFloor:
    """Floor action: keep listening, extending the endpoint window."""

    extension_ms: int


@dataclass(frozen=True)
class TakeTurn:
    """Floor action: the system should start talking."""


FloorAction = HoldFloor | TakeTurn


@dataclass(frozen=True)
class Task:
    ordinal: int
    instruction: str
    reconstructed: bool = False


@dataclass(frozen=True)
class CommandSpec:
    digit: int
    description: str
    effect: EffectKind


@dataclass(frozen=True)
class TurnClassSpec:
    digit: int
    description: str
    floor_action: FloorAction


@dataclass(frozen=True)
class Scenario:
    id: str
    title: str
    constraints: tuple[str, ...]
    tasks: tuple[Task, ...]
    spot_requirements: tuple[str, ...]
    command_table: tuple[CommandSpec, ...]
    command_timing_notes: tuple[str, ...]
    turn_class_table: tuple[TurnClassSpec, ...]
    intro_script: tuple[str, ...]
    closing_script: tuple[str, ...]
    session_budget_s: int
    history_window: int = 20

    def budget_ms(self) -> int:
        return self.session_budget_s * 1000

    def command_for(self, digit: int) -> CommandSpec | None:
        for spec in self.command_table:
            if spec.digit == digit:
                return spec
        return None

    def turn_class_for(self, digit: int) -> TurnClassSpec | None:
        for spec in self.turn_class_table:
            if spec.digit == digit:
                return spec
        return None


def _expect(raw: dict, key: str, kind: type, path: str) -> Any:
    if key not in raw:
        raise SchemaViolation(f"{path}.{key}", "missing required field")
    value = raw[key]
    if kind is int and isinstance(value, bool):
        raise SchemaViolation(f"{path}.{key}", "expected integer, got boolean")
    if not isinstance(value, kind):
        raise SchemaViolation(
            f"{path}.{key}", f"expected {kind.__name__}, got {type(value).__name__}"
        )
    return value


def _expect_str_list(raw: dict, key: str, path: str) -> tuple[str, ...]:
    values = _expect(raw, key, list, path)
    out = []
    for i, item in enumerate(values):
        if not isinstance(item, str):
            raise SchemaViolation(f"{path}.{key}[{i}]", "expected string")
        out.append(item)
    return tuple(out)


def _reject_unknown(raw: dict, allowed: set[str], path: str) -> None:
    for key in raw:
        if key not in allowed:
            raise SchemaViolation(f"{path}.{key}", "unknown field")


def _parse_task(raw: Any, path: str) -> Task:
    if not isinstance(raw, dict):
        raise SchemaViolation(path, "expected object")
    _reject_unknown(raw, {"ordinal", "instruction", "reconstructed"}, path)
    ordinal = _expect(raw, "ordinal", int, path)
    instruction = _expect(raw, "instruction", str, path)
    reconstructed = raw.get("reconstructed", False)
    if not isinstance(reconstructed, bool):
        raise SchemaViolation(f"{path}.reconstructed", "expected boolean")
    return Task(ordinal=ordinal, instruction=instruction, reconstructed=reconstructed)


def _parse_command(raw: Any, path: str) -> CommandSpec:
    if not isinstance(raw, dict):
        raise SchemaViolation(path, "expected object")
    _reject_unknown(raw, {"digit", "description", "effect"}, path)
    digit = _expect(raw, "digit", int, path)
    description = _expect(raw, "description", str, path)
    effect_raw = _expect(raw, "effect", str, path)
    try:
        effect = EffectKind(effect_raw)
    except ValueError:
        raise SchemaViolation(
            f"{path}.effect",
            f"unknown effect {effect_raw!r}; expected one of "
            + ", ".join(e.value for e in EffectKind),
        ) from None
    return CommandSpec(digit=digit, description=description, effect=effect)


def _parse_turn_class(raw: Any, path: str) -> TurnClassSpec:
    if not isinstance(raw, dict):
        raise SchemaViolation(path, "expected object")
    _reject_unknown(raw, {"digit", "description", "floor_action", "extension_ms"}, path)
    digit = _expect(raw, "digit", int, path)
    description = _expect(raw, "description", str, path)
    action = _expect(raw, "floor_action", str, path)
    if action == "hold":
        extension = _expect(raw, "extension_ms", int, path)
        floor_action: FloorAction = HoldFloor(extension_ms=extension)
    elif action == "take":
        if "extension_ms" in raw:
            raise SchemaViolation(
                f"{path}.extension_ms", "only valid with floor_action 'hold'"
            )
        floor_action = TakeTurn()
    else:
        raise SchemaViolation(
            f"{path}.floor_action", f"expected 'hold' or 'take', got {action!r}"
        )
    return TurnClassSpec(digit=digit, description=description, floor_action=floor_action)


def parse_scenario(document: str) -> Scenario:
    """Parse a JSON scenario document into a validated Scenario.

    Raises MalformedDocument for JSON syntax errors, SchemaViolation for
    missing/unknown/badly-typed fields, and InvariantViolation for documents
    that are well-shaped but break a scenario invariant. Exactly one error is
    raised per bad document, naming the offending path.
    """
    try:
        raw = json.loads(document)
    except json.JSONDecodeError as exc:
        raise MalformedDocument("$", f"invalid JSON: {exc.msg} (line {exc.lineno})") from None
    if not isinstance(raw, dict):
        raise SchemaViolation("$", "top level must be an object")
    _reject_unknown(raw, _TOP_LEVEL_KEYS, "$")

    schema = _expect(raw, "schema", int, "$")
    if schema != SCHEMA_VERSION:
        raise SchemaViolation("$.schema", f"unsupported schema version {schema}")

    tasks_raw = _expect(raw, "tasks", list, "$")
    tasks = tuple(
        _parse_task(item, f"$.tasks[{i}]") for i, item in enumerate(tasks_raw)
    )
    commands_raw = _expect(raw, "command_table", list, "$")
    commands = tuple(
        _parse_command(item, f"$.command_table[{i}]")
        for i, item in enumerate(commands_raw)
    )
    classes_raw = _expect(raw, "turn_class_table", list, "$")
    classes = tuple(
        _parse_turn_class(item, f"$.turn_class_table[{i}]")
        for i, item in enumerate(classes_raw)
    )

    scenario = Scenario(
        id=_expect(raw, "id", str, "$"),
        title=_expect(raw, "title", str, "$"),
        constraints=_expect_str_list(raw, "constraints", "$"),
        tasks=tasks,
        spot_requirements=_expect_str_list(raw, "spot_requirements", "$"),
        command_table=commands,
        command_timing_notes=_expect_str_list(raw, "command_timing_notes", "$"),
        turn_class_table=classes,
        intro_script=_expect_str_list(raw, "intro_script", "$"),
        closing_script=_expect_str_list(raw, "closing_script", "$"),
        session_budget_s=_expect(raw, "session_budget_s", int, "$"),
        history_window=_expect(raw, "history_window", int, "$"),
    )

    violations = validate_scenario(scenario)
    if violations:
        first = violations[0]
        raise InvariantViolation(first.path, first.message)
    return scenario


def parse_scenario_file(path: str) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def validate_scenario(scenario: Scenario) -> list[Violation]:
    """Check every scenario invariant; returns [] iff all hold.

    Pure: violations are returned as data, never raised.
    """
    out: list[Violation] = []

    if not scenario.tasks:
        out.append(Violation("$.tasks", "at least one task is required"))
    previous = 0
    for i, task in enumerate(scenario.tasks):
        path = f"$.tasks[{i}]"
        if i == 0 and task.ordinal != 1:
            out.append(Violation(f"{path}.ordinal", "task ordinals must start at 1"))
        elif task.ordinal <= previous:
            out.append(
                Violation(f"{path}.ordinal", "task ordinals must be strictly increasing")
            )
        previous = task.ordinal
        if not task.instruction.strip():
            out.append(Violation(f"{path}.instruction", "instruction must be nonempty"))

    seen_digits: set[int] = set()
    for i, cmd in enumerate(scenario.command_table):
        path = f"$.command_table[{i}]"
        if not 0 <= cmd.digit <= 9:
            out.append(Violation(f"{path}.digit", "digit must be in 0..9"))
        elif cmd.digit in seen_digits:
            out.append(Violation(f"{path}.digit", f"duplicate command digit {cmd.digit}"))
        seen_digits.add(cmd.digit)
        if not cmd.description.strip():
            out.append(Violation(f"{path}.description", "description must be nonempty"))

    seen_classes: set[int] = set()
    for i, cls in enumerate(scenario.turn_class_table):
        path = f"$.turn_class_table[{i}]"
        if not 0 <= cls.digit <= 9:
            out.append(Violation(f"{path}.digit", "digit must be in 0..9"))
        elif cls.digit in seen_classes:
            out.append(Violation(f"{path}.digit", f"duplicate class digit {cls.digit}"))
        seen_classes.add(cls.digit)
        if isinstance(cls.floor_action, HoldFloor) and cls.floor_action.extension_ms <= 0:
            out.append(
                Violation(f"{path}.extension_ms", "hold extension must be positive")
            )

    if scenario.session_budget_s <= 0:
        out.append(Violation("$.session_budget_s", "session budget must be positive"))
    if scenario.history_window <= 0:
        out.append(Violation("$.history_window", "history window must be positive"))
    if not scenario.intro_script:
        out.append(Violation("$.intro_script", "intro script must be nonempty"))
    if not scenario.closing_script:
        out.append(Violation("$.closing_script", "closing script must be nonempty"))
    for key, lines in (("intro_script", scenario.intro_script),
                       ("closing_script", scenario.closing_script)):
        for i, line in enumerate(lines):
            if not line.strip():
                out.append(Violation(f"$.{key}[{i}]", "script line must be nonempty"))

    return out


def serialize_scenario(scenario: Scenario) -> str:
    """Render a Scenario back to its JSON document form (round-trips parse)."""

    def task_obj(task: Task) -> dict:
        obj: dict[str, Any] = {"ordinal": task.ordinal, "instruction": task.instruction}
        if task.reconstructed:
            obj["reconstructed"] = True
        return obj

    def class_obj(cls: TurnClassSpec) -> dict:
        obj: dict[str, Any] = {"digit": cls.digit, "description": cls.description}
        if isinstance(cls.floor_action, HoldFloor):
            obj["floor_action"] = "hold"
            obj["extension_ms"] = cls.floor_action.extension_ms
        else:
            obj["floor_action"] = "take"
        return obj

    doc = {
        "schema": SCHEMA_VERSION,
        "id": scenario.id,
        "title": scenario.title,
        "constraints": list(scenario.constraints),
        "tasks": [task_obj(t) for t in scenario.tasks],
        "spot_requirements": list(scenario.spot_requirements),
        "command_table": [
            {"digit": c.digit, "description": c.description, "effect": c.effect.value}
            for c in scenario.command_table
        ],
        "command_timing_notes": list(scenario.command_timing_notes),
        "turn_class_table": [class_obj(c) for c in scenario.turn_class_table],
        "intro_script": list(scenario.intro_script),
        "closing_script": list(scenario.closing_script),
        "session_budget_s": scenario.session_budget_s,
        "history_window": scenario.history_window,
    }
    return json.dumps(doc, ensure_ascii=False, indent=2) + "\n"
