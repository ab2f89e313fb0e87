"""Shared fixtures and builders for the test suite."""

from __future__ import annotations

from pathlib import Path

import pytest

import metadialog
from metadialog.asr import RecognizerConfig, ScriptedSpeechSource, ScriptedUtterance
from metadialog.dispatch import AssetCatalog, load_asset_catalog
from metadialog.interpreter import ParseMode
from metadialog.llm import (
    LlmGateway,
    LogicalCompletionService,
    ScriptedBackend,
    ScriptEntry,
)
from metadialog.prompts import PromptPurpose
from metadialog.scenario import Scenario, parse_scenario_file
from metadialog.session import Session, SessionConfig
from metadialog.state import Speaker, Turn

FIXTURES = Path(metadialog.__file__).parent / "fixtures"
KYOTO = FIXTURES / "kyoto-travel.json"
KYOTO_ASSETS = FIXTURES / "kyoto-assets.json"
HAPPY_LLM = FIXTURES / "happy-path-llm.jsonl"
HAPPY_ASR = FIXTURES / "happy-path-asr.jsonl"


@pytest.fixture(scope="session")
def kyoto_scenario() -> Scenario:
    return parse_scenario_file(str(KYOTO))


@pytest.fixture(scope="session")
def kyoto_catalog() -> AssetCatalog:
    return load_asset_catalog(str(KYOTO_ASSETS))


def turn(speaker: Speaker, text: str, started_at: int, ended_at: int) -> Turn:
    return Turn(speaker=speaker, text=text, started_at=started_at, ended_at=ended_at)


def user_turn(text: str, started_at: int = 0, ended_at: int = 0) -> Turn:
    return turn(Speaker.USER, text, started_at, ended_at)


def system_turn(text: str, started_at: int = 0, ended_at: int = 0) -> Turn:
    return turn(Speaker.SYSTEM, text, started_at, ended_at)


def dfcp(output: str, delay_ms: int = 0, match: str | None = None) -> ScriptEntry:
    return ScriptEntry(purpose=PromptPurpose.DFCP, output=output, delay_ms=delay_ms, match=match)


def ttcp(output: str, delay_ms: int = 0, match: str | None = None) -> ScriptEntry:
    return ScriptEntry(purpose=PromptPurpose.TTCP, output=output, delay_ms=delay_ms, match=match)


def utt(
    text: str, pre_silence_ms: int = 0, post_silence_ms: int = 1000, barge_in: bool = False
) -> ScriptedUtterance:
    return ScriptedUtterance(
        text=text,
        pre_silence_ms=pre_silence_ms,
        post_silence_ms=post_silence_ms,
        barge_in=barge_in,
    )


def build_session(
    scenario: Scenario,
    llm_entries: list[ScriptEntry] | None = None,
    asr_entries: list[ScriptedUtterance] | None = None,
    budget_ms: int | None = None,
    parse_mode: ParseMode = ParseMode.STRICT,
    catalog: AssetCatalog | None = None,
    writer=None,
) -> tuple[Session, LlmGateway]:
    """Fully scripted in-memory session; returns it with its gateway."""
    gateway = LlmGateway(ScriptedBackend(llm_entries or []))
    config = SessionConfig(parse_mode=parse_mode, budget_override_ms=budget_ms)
    source = ScriptedSpeechSource(asr_entries or [], config=RecognizerConfig())
    session = Session(
        scenario=scenario,
        completions=LogicalCompletionService(gateway),
        source=source,
        config=config,
        catalog=catalog,
        writer=writer,
    )
    return session, gateway
