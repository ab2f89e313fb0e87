"""Scenario parsing, validation, and round-trip tests."""

import json

import pytest

from metadialog.scenario import (
    EffectKind,
    HoldFloor,
    InvariantViolation,
    MalformedDocument,
    SchemaViolation,
    TakeTurn,
    parse_scenario,
    serialize_scenario,
    validate_scenario,
)

MINIMAL = {
    "schema": 1,
    "id": "minimal",
    "title": "Minimal scenario",
    "constraints": ["Stay on topic."],
    "tasks": [{"ordinal": 1, "instruction": "Greet the customer."}],
    "spot_requirements": [],
    "command_table": [
        {"digit": 0, "description": "The dialogue is over.", "effect": "EndDialogue"}
    ],
    "command_timing_notes": [],
    "turn_class_table": [
        {"digit": 0, "description": "Will keep talking.", "floor_action": "hold", "extension_ms": 4000},
        {"digit": 1, "description": "May keep talking.", "floor_action": "hold", "extension_ms": 2000},
        {"digit": 2, "description": "May be done.", "floor_action": "take"},
        {"digit": 3, "description": "Is done.", "floor_action": "take"},
    ],
    "intro_script": ["Hello."],
    "closing_script": ["Goodbye."],
    "session_budget_s": 600,
    "history_window": 20,
}


def minimal_doc(**overrides) -> str:
    doc = json.loads(json.dumps(MINIMAL))
    doc.update(overrides)
    return json.dumps(doc)


def test_minimal_document_counts():
    scenario = parse_scenario(minimal_doc())
    assert len(scenario.tasks) == 1
    assert len(scenario.command_table) == 1
    assert scenario.command_table[0].digit == 0
    assert scenario.command_table[0].effect is EffectKind.END_DIALOGUE
    assert len(scenario.turn_class_table) == 4
    assert scenario.session_budget_s == 600
    assert scenario.budget_ms() == 600_000


def test_bundled_fixture_mirrors_expected_content(kyoto_scenario):
    assert len(kyoto_scenario.tasks) == 10
    assert [c.digit for c in kyoto_scenario.command_table] == [0, 1, 2, 3]
    assert [c.digit for c in kyoto_scenario.turn_class_table] == [0, 1, 2, 3]
    task10 = kyoto_scenario.tasks[-1]
    assert task10.ordinal == 10
    assert "Confirm with the customer" in task10.instruction
    assert kyoto_scenario.command_table[3].description == "Propose a plan."
    assert kyoto_scenario.command_table[3].effect is EffectKind.PROPOSE_PLAN
    # reconstructed filler tasks are flagged as such
    assert any(t.reconstructed for t in kyoto_scenario.tasks)
    assert not kyoto_scenario.tasks[0].reconstructed
    assert kyoto_scenario.turn_class_table[0].floor_action == HoldFloor(4000)
    assert kyoto_scenario.turn_class_table[3].floor_action == TakeTurn()


def test_duplicate_command_digit_names_offending_path():
    doc = json.loads(minimal_doc())
    doc["command_table"] = [
        {"digit": 2, "description": "Show pictures.", "effect": "ShowImages"},
        {"digit": 2, "description": "Propose a plan.", "effect": "ProposePlan"},
    ]
    with pytest.raises(InvariantViolation) as err:
        parse_scenario(json.dumps(doc))
    assert "command_table[1].digit" in err.value.path


def test_malformed_json_raises_malformed_document():
    with pytest.raises(MalformedDocument):
        parse_scenario("{not json")


def test_missing_field_raises_schema_violation():
    doc = json.loads(minimal_doc())
    del doc["intro_script"]
    with pytest.raises(SchemaViolation) as err:
        parse_scenario(json.dumps(doc))
    assert "intro_script" in err.value.path


def test_unknown_top_level_key_rejected():
    with pytest.raises(SchemaViolation) as err:
        parse_scenario(minimal_doc(surprise=1))
    assert "surprise" in err.value.path


def test_unknown_effect_rejected():
    doc = json.loads(minimal_doc())
    doc["command_table"][0]["effect"] = "LaunchRocket"
    with pytest.raises(SchemaViolation) as err:
        parse_scenario(json.dumps(doc))
    assert "effect" in err.value.path


def test_wrong_schema_version_rejected():
    with pytest.raises(SchemaViolation):
        parse_scenario(minimal_doc(schema=2))


def test_validate_valid_fixture_is_clean(kyoto_scenario):
    assert validate_scenario(kyoto_scenario) == []


def test_validate_budget_zero():
    scenario = parse_scenario(minimal_doc())
    broken = scenario.__class__(**{**scenario.__dict__, "session_budget_s": 0})
    violations = validate_scenario(broken)
    assert len(violations) == 1
    assert "session_budget" in violations[0].path


def test_validate_zero_extension():
    doc = json.loads(minimal_doc())
    doc["turn_class_table"][0]["extension_ms"] = 0
    with pytest.raises(InvariantViolation) as err:
        parse_scenario(json.dumps(doc))
    assert "turn_class_table[0]" in err.value.path


def test_task_ordinals_must_start_at_one_and_increase():
    doc = json.loads(minimal_doc())
    doc["tasks"] = [
        {"ordinal": 1, "instruction": "a"},
        {"ordinal": 3, "instruction": "b"},
        {"ordinal": 2, "instruction": "c"},
    ]
    with pytest.raises(InvariantViolation) as err:
        parse_scenario(json.dumps(doc))
    assert "tasks[2].ordinal" in err.value.path

    doc["tasks"] = [{"ordinal": 2, "instruction": "a"}]
    with pytest.raises(InvariantViolation):
        parse_scenario(json.dumps(doc))


def test_round_trip_identity(kyoto_scenario):
    assert parse_scenario(serialize_scenario(kyoto_scenario)) == kyoto_scenario
    minimal = parse_scenario(minimal_doc())
    assert parse_scenario(serialize_scenario(minimal)) == minimal


def test_list_order_preserved(kyoto_scenario):
    ordinals = [t.ordinal for t in kyoto_scenario.tasks]
    assert ordinals == sorted(ordinals) == list(range(1, 11))


def test_every_document_parses_clean_or_raises_exactly_one_error():
    """Mutations either produce a scenario validating to [] or one typed error."""
    mutations = [
        {},  # unchanged
        {"session_budget_s": -5},
        {"history_window": 0},
        {"intro_script": []},
        {"closing_script": []},
        {"tasks": []},
        {"tasks": [{"ordinal": 1, "instruction": "   "}]},
        {"title": 42},
        {"constraints": "not a list"},
    ]
    for override in mutations:
        document = minimal_doc(**override)
        try:
            scenario = parse_scenario(document)
        except (MalformedDocument, SchemaViolation, InvariantViolation):
            continue
        assert validate_scenario(scenario) == []
