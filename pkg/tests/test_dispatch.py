"""Command dispatch and image resolution."""

import json

import pytest

from metadialog.dispatch import (
    AssetCatalog,
    AssetRef,
    EndDialogue,
    FinalizePlan,
    MalformedCatalog,
    ProposePlan,
    ShowImages,
    dispatch_command,
    load_asset_catalog,
    resolve_images,
)
from metadialog.interpreter import CommandInvocation, UnknownCommand
from metadialog.state import Phase, SessionClock, SessionState

from .conftest import KYOTO_ASSETS, system_turn, user_turn


def meta_state(history=()) -> SessionState:
    state = SessionState(
        phase=Phase.META_CONTROLLED,
        clock=SessionClock(started_at="test", budget_ms=600_000),
    )
    state.history.extend(history)
    return state


def test_command_0_ends_dialogue(kyoto_scenario, kyoto_catalog):
    result = dispatch_command(
        CommandInvocation(0), meta_state(), kyoto_scenario, kyoto_catalog
    )
    assert result.effects == (EndDialogue(),)
    assert result.phase_to is Phase.CLOSING
    assert result.request_followup is False


def test_command_1_finalizes_plan(kyoto_scenario, kyoto_catalog):
    result = dispatch_command(
        CommandInvocation(1), meta_state(), kyoto_scenario, kyoto_catalog
    )
    assert result.effects == (FinalizePlan(),)
    assert result.goal_achieved is True
    assert result.request_followup is True
    assert result.followup_directive


def test_command_2_shows_mentioned_spot(kyoto_scenario, kyoto_catalog):
    history = [user_turn("Could you show me Kinkakuji?", 0, 1000)]
    result = dispatch_command(
        CommandInvocation(2), meta_state(history), kyoto_scenario, kyoto_catalog
    )
    assert len(result.effects) == 1
    effect = result.effects[0]
    assert isinstance(effect, ShowImages)
    assert [a.spot_name for a in effect.assets] == ["Kinkakuji"]
    assert result.clarify_line is None


def test_command_2_without_mention_falls_back_to_clarifying(kyoto_scenario, kyoto_catalog):
    history = [user_turn("Show me something nice", 0, 1000)]
    result = dispatch_command(
        CommandInvocation(2), meta_state(history), kyoto_scenario, kyoto_catalog
    )
    effect = result.effects[0]
    assert isinstance(effect, ShowImages)
    assert effect.assets == ()
    assert result.clarify_line
    assert result.request_followup is False


def test_command_3_proposes_plan(kyoto_scenario, kyoto_catalog):
    result = dispatch_command(
        CommandInvocation(3), meta_state(), kyoto_scenario, kyoto_catalog
    )
    assert result.effects == (ProposePlan(),)
    assert result.followup_directive
    assert result.request_followup is True


def test_unknown_command_is_defensive_error(kyoto_scenario, kyoto_catalog):
    with pytest.raises(UnknownCommand):
        dispatch_command(CommandInvocation(7), meta_state(), kyoto_scenario, kyoto_catalog)


def test_dispatch_total_over_command_table(kyoto_scenario, kyoto_catalog):
    phase_changers = []
    for spec in kyoto_scenario.command_table:
        result = dispatch_command(
            CommandInvocation(spec.digit), meta_state(), kyoto_scenario, kyoto_catalog
        )
        assert len(result.effects) >= 1
        if result.phase_to is not None:
            phase_changers.append(spec.digit)
    assert phase_changers == [0]  # command 0 is the only phase changer


# -- image resolution -----------------------------------------------------------


def oracle_recency_order(texts: list[str], catalog: AssetCatalog) -> list[str]:
    """Independent last-mention-index scan."""
    last: dict[str, int] = {}
    for index, text in enumerate(texts):
        for asset in catalog.assets:
            if asset.spot_name.lower() in text.lower():
                last[asset.spot_name] = index
    ordered = sorted(last.items(), key=lambda item: item[1], reverse=True)
    return [name for name, _ in ordered][:3]


def test_resolve_direct_match(kyoto_catalog):
    history = [user_turn("I want to see Kinkakuji", 0, 1000)]
    assert [a.spot_name for a in resolve_images(history, kyoto_catalog)] == ["Kinkakuji"]


def test_resolve_no_mention_is_empty(kyoto_catalog):
    history = [user_turn("somewhere calm please", 0, 1000)]
    assert resolve_images(history, kyoto_catalog) == []


def test_resolve_recency_order_matches_oracle(kyoto_catalog):
    texts = [
        "hello",
        "tell me about temples",
        "is Kiyomizu nice this season?",
        "hmm",
        "what about gardens",
        "actually",
        "I heard Kinkakuji is beautiful",
    ]
    history = [user_turn(t, i * 1000, i * 1000 + 500) for i, t in enumerate(texts)]
    got = [a.spot_name for a in resolve_images(history, kyoto_catalog)]
    assert got == ["Kinkakuji", "Kiyomizu"]
    assert got == oracle_recency_order(texts, kyoto_catalog)


def test_resolve_caps_at_three_and_stays_subset(kyoto_catalog):
    texts = [
        "Kinkakuji please",
        "and Kiyomizu",
        "also Arashiyama",
        "and Ginkakuji",
        "and Nijo Castle too",
    ]
    history = [user_turn(t, i * 1000, i * 1000 + 500) for i, t in enumerate(texts)]
    resolved = resolve_images(history, kyoto_catalog)
    assert len(resolved) == 3
    names = {a.spot_name for a in kyoto_catalog.assets}
    assert {a.spot_name for a in resolved} <= names
    assert [a.spot_name for a in resolved] == oracle_recency_order(texts, kyoto_catalog)


def test_resolve_is_case_insensitive(kyoto_catalog):
    history = [user_turn("KINKAKUJI!", 0, 1000)]
    assert [a.spot_name for a in resolve_images(history, kyoto_catalog)] == ["Kinkakuji"]


def test_resolve_same_turn_tie_keeps_catalog_order(kyoto_catalog):
    history = [
        user_turn("Kiyomizu or Kinkakuji, what do you think?", 0, 1000),
        system_turn("Both are lovely.", 1100, 2100),
    ]
    got = [a.spot_name for a in resolve_images(history, kyoto_catalog)]
    assert got == ["Kinkakuji", "Kiyomizu"]  # tie resolved by catalog order


# -- catalog loading ---------------------------------------------------------------


def test_load_bundled_catalog():
    catalog = load_asset_catalog(str(KYOTO_ASSETS))
    assert len(catalog.assets) == 6
    assert all(isinstance(a, AssetRef) and a.uri for a in catalog.assets)


def test_malformed_catalog_rejected(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"not": "a list"}))
    with pytest.raises(MalformedCatalog):
        load_asset_catalog(str(path))
    path.write_text(json.dumps([{"spot_name": "x"}]))
    with pytest.raises(MalformedCatalog):
        load_asset_catalog(str(path))
    path.write_text("{{{")
    with pytest.raises(MalformedCatalog):
        load_asset_catalog(str(path))
