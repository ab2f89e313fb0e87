"""CLI entry points: validate and replay (serve is exercised via the service tests)."""

import json

from metadialog.cli import main

from .conftest import HAPPY_ASR, HAPPY_LLM, KYOTO


def test_validate_ok(capsys):
    code = main(["validate", "--scenario", str(KYOTO)])
    out = capsys.readouterr().out
    assert code == 0
    assert out.startswith("OK: kyoto-travel")


def test_validate_rejects_bad_document(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    code = main(["validate", "--scenario", str(bad)])
    assert code == 1
    assert "INVALID" in capsys.readouterr().out


def test_validate_missing_file(capsys):
    code = main(["validate", "--scenario", "/no/such/file.json"])
    assert code == 1
    assert "ERROR" in capsys.readouterr().out


def test_replay_prints_summary_and_writes_transcript(tmp_path, capsys):
    out_path = tmp_path / "transcript.jsonl"
    code = main(
        [
            "replay",
            "--scenario",
            str(KYOTO),
            "--llm-script",
            str(HAPPY_LLM),
            "--asr-script",
            str(HAPPY_ASR),
            "--out",
            str(out_path),
        ]
    )
    output = capsys.readouterr().out
    assert code == 0
    assert "final phase: Terminated" in output
    assert "commands: 0:1, 1:1, 3:1" in output
    lines = out_path.read_text().strip().splitlines()
    assert json.loads(lines[0])["scenario_id"] == "kyoto-travel"
    assert json.loads(lines[-1])["kind"] == "SessionEnded"


def test_replay_budget_flag(capsys):
    code = main(
        [
            "replay",
            "--scenario",
            str(KYOTO),
            "--llm-script",
            str(HAPPY_LLM),
            "--budget-seconds",
            "5",
        ]
    )
    assert code == 0
    assert "final phase: Terminated" in capsys.readouterr().out
