"""Mapping of invoked commands to concrete engine effects.

The dispatcher is a pure decision function: it never mutates state or talks
to backends itself. The session loop executes the returned effects and
applies the state delta.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .interpreter import CommandInvocation, UnknownCommand
from .scenario import EffectKind, Scenario
from .state import Phase, SessionState, Turn

MAX_IMAGES = 3

FINALIZE_DIRECTIVE = (
    "The plan is now final. Present the finalized plan to the customer in one "
    "short confirming utterance."
)
PROPOSE_DIRECTIVE = (
    "Propose a concrete travel plan now, as one short utterance, using what "
    "the customer has told you."
)
CLARIFY_IMAGES_LINE = (
    "Which sightseeing spot would you like to see pictures of?"
)


@dataclass(frozen=True)
class AssetRef:
    spot_name: str
    uri: str
    caption: str


@dataclass(frozen=True)
class AssetCatalog:
    assets: tuple[AssetRef, ...] = ()


class MalformedCatalog(ValueError):
    """Asset catalog file is not the expected JSON array."""


def load_asset_catalog(path: str) -> AssetCatalog:
    """Load a catalog file: a JSON array of {spot_name, uri, caption}."""
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MalformedCatalog(f"invalid JSON: {exc.msg}") from None
    if not isinstance(raw, list):
        raise MalformedCatalog("catalog must be a JSON array")
    assets = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict) or not {"spot_name", "uri", "caption"} <= set(item):
            raise MalformedCatalog(f"entry {i} must have spot_name, uri, caption")
        if not str(item["uri"]):
            raise MalformedCatalog(f"entry {i} has an empty uri")
        assets.append(
            AssetRef(
                spot_name=str(item["spot_name"]),
                uri=str(item["uri"]),
                caption=str(item["caption"]),
            )
        )
    return AssetCatalog(assets=tuple(assets))


@dataclass(frozen=True)
class EndDialogue:
    pass


@dataclass(frozen=True)
class FinalizePlan:
    pass


@dataclass(frozen=True)
class ShowImages:
    assets: tuple[AssetRef, ...]


@dataclass(frozen=True)
class ProposePlan:
    pass


Effect = EndDialogue | FinalizePlan | ShowImages | ProposePlan


@dataclass(frozen=True)
class DispatchResult:
    """Effects plus the state delta the session loop must apply."""

    effects: tuple[Effect, ...]
    phase_to: Phase | None = None
    goal_achieved: bool = False
    followup_directive: str | None = None
    request_followup: bool = False
    clarify_line: str | None = None


def resolve_images(
    history: list[Turn] | tuple[Turn, ...], catalog: AssetCatalog
) -> list[AssetRef]:
    """Catalog assets mentioned in history, most recently mentioned first.

    A mention is a case-insensitive substring hit of the spot name in any
    turn text; ties cannot occur because later turns win. Capped at 3.
    """
    last_mention: dict[str, int] = {}
    for index, turn in enumerate(history):
        text = turn.text.lower()
        for asset in catalog.assets:
            if asset.spot_name.lower() in text:
                last_mention[asset.spot_name] = index
    mentioned = [a for a in catalog.assets if a.spot_name in last_mention]
    mentioned.sort(key=lambda a: last_mention[a.spot_name], reverse=True)
    return mentioned[:MAX_IMAGES]


def dispatch_command(
    cmd: CommandInvocation,
    state: SessionState,
    scenario: Scenario,
    catalog: AssetCatalog,
) -> DispatchResult:
    """Decide the effects of an invoked command digit.

    Total over the scenario's command table; the interpreter guarantees the
    digit is known, this re-checks defensively.
    """
    spec = scenario.command_for(cmd.digit)
    if spec is None:
        raise UnknownCommand(cmd.digit)

    if spec.effect is EffectKind.END_DIALOGUE:
        return DispatchResult(effects=(EndDialogue(),), phase_to=Phase.CLOSING)

    if spec.effect is EffectKind.FINALIZE_PLAN:
        return DispatchResult(
            effects=(FinalizePlan(),),
            goal_achieved=True,
            followup_directive=FINALIZE_DIRECTIVE,
            request_followup=True,
        )

    if spec.effect is EffectKind.SHOW_IMAGES:
        assets = tuple(resolve_images(state.history, catalog))
        if not assets:
            # fallback: nothing to show, ask instead of silently doing nothing
            return DispatchResult(
                effects=(ShowImages(assets=()),),
                clarify_line=CLARIFY_IMAGES_LINE,
            )
        return DispatchResult(effects=(ShowImages(assets=assets),), request_followup=True)

    return DispatchResult(
        effects=(ProposePlan(),),
        followup_directive=PROPOSE_DIRECTIVE,
        request_followup=True,
    )
