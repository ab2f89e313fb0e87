"""HTTP/WebSocket surface smoke tests (scripted backend, real-time loop)."""

import json

import pytest
from fastapi.testclient import TestClient

from metadialog.interpreter import ParseMode
from metadialog.service import ServerConfig, create_app

TINY_SCENARIO = {
    "schema": 1,
    "id": "tiny",
    "title": "Tiny live scenario",
    "constraints": ["Be brief."],
    "tasks": [{"ordinal": 1, "instruction": "Chat."}],
    "spot_requirements": [],
    "command_table": [
        {"digit": 0, "description": "Done.", "effect": "EndDialogue"}
    ],
    "command_timing_notes": [],
    "turn_class_table": [
        {"digit": 2, "description": "May be done.", "floor_action": "take"},
        {"digit": 3, "description": "Done talking.", "floor_action": "take"},
    ],
    "intro_script": ["Hi."],
    "closing_script": ["Bye."],
    "session_budget_s": 600,
    "history_window": 20,
}


@pytest.fixture
def app_client(tmp_path):
    scenario_path = tmp_path / "tiny.json"
    scenario_path.write_text(json.dumps(TINY_SCENARIO))
    script_path = tmp_path / "llm.jsonl"
    script_path.write_text(
        json.dumps({"purpose": "TTCP", "output": "3"})
        + "\n"
        + json.dumps({"purpose": "DFCP", "output": "Nice."})
        + "\n"
    )
    config = ServerConfig(
        scenario_path=str(scenario_path),
        llm_spec=f"scripted:{script_path}",
        parse_mode=ParseMode.LENIENT,
        budget_override_ms=60_000,
        transcript_dir=str(tmp_path / "transcripts"),
    )
    with TestClient(create_app(config)) as client:
        yield client


def test_health(app_client):
    response = app_client.get("/health")
    assert response.status_code == 200
    assert response.json() == {"status": "ok"}


def test_create_session_returns_id_and_budget(app_client):
    response = app_client.post("/sessions")
    assert response.status_code == 200
    body = response.json()
    assert body["budget_ms"] == 60_000
    assert len(body["session_id"]) == 32


def test_unknown_session_transcript_404(app_client):
    assert app_client.get("/sessions/nope/transcript").status_code == 404


def test_websocket_streams_intro_and_accepts_utterance(app_client):
    session_id = app_client.post("/sessions").json()["session_id"]
    with app_client.websocket_connect(f"/sessions/{session_id}/events") as ws:
        first = ws.receive_json()
        assert first["kind"] == "SystemUtteranceStart"
        assert first["payload"]["text"] == "Hi."
        assert first["seq"] == 0
        # intro line "Hi." lasts 1 s; wait for its end, then answer
        second = ws.receive_json()
        assert second["kind"] == "SystemUtteranceEnd"
        ws.send_json({"type": "utterance", "text": "hello there"})
        kinds = []
        while len(kinds) < 3:
            event = ws.receive_json()
            kinds.append(event["kind"])
        assert "UserPartial" in kinds
        assert "UserFinal" in kinds

    transcript = app_client.get(f"/sessions/{session_id}/transcript")
    assert transcript.status_code == 200
    lines = transcript.text.strip().splitlines()
    header = json.loads(lines[0])
    assert header["scenario_id"] == "tiny"
    assert json.loads(lines[1])["seq"] == 0


def test_typing_messages_feed_recognizer(app_client):
    session_id = app_client.post("/sessions").json()["session_id"]
    with app_client.websocket_connect(f"/sessions/{session_id}/events") as ws:
        ws.receive_json()  # intro start
        ws.receive_json()  # intro end
        for char in "yo":
            ws.send_json({"type": "typing", "char": char})
        ws.send_json({"type": "pause"})
        saw_partial = False
        for _ in range(40):
            event = ws.receive_json()
            if event["kind"] == "UserPartial":
                saw_partial = True
                assert event["payload"]["text"] == "yo"
                break
        assert saw_partial
