"""Simulated speech recognizer.

Typing stands in for speech: keystrokes are ongoing speech, pauses are
silence, and an utterance finalizes once silence crosses the endpoint
threshold. The turn-taking controller can stretch that threshold while a
hold-floor window is open. A scripted variant replays canned utterances at
deterministic logical times for headless runs. Real ASR would plug in at the
same event interface; no audio code lives here.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .turntaking import AsrEvent, AsrFinal, AsrPartial

DEFAULT_ENDPOINT_MS = 800
DEFAULT_PARTIAL_INTERVAL_MS = 500


class SegmentClosed(RuntimeError):
    """Input arrived while the recognizer segment is held closed."""


class EmptyUtterance(ValueError):
    """A scripted utterance has no text."""


class MalformedAsrScript(ValueError):
    """Replay script line is not a valid utterance entry."""


@dataclass(frozen=True)
class RecognizerConfig:
    endpoint_ms: int = DEFAULT_ENDPOINT_MS
    partial_interval_ms: int = DEFAULT_PARTIAL_INTERVAL_MS

    def __post_init__(self) -> None:
        if self.endpoint_ms <= 0 or self.partial_interval_ms <= 0:
            raise ValueError("recognizer intervals must be positive")
        if self.partial_interval_ms > self.endpoint_ms:
            raise ValueError("partial_interval_ms must not exceed endpoint_ms")


@dataclass(frozen=True)
class TypingEvent:
    char: str
    at_ms: int


class TypingRecognizer:
    """Live recognizer driven by keystrokes and the engine tick."""

    def __init__(self, config: RecognizerConfig | None = None):
        self.config = config or RecognizerConfig()
        self._buffer = ""
        self._segment_open = True
        self._segment_started_at: int | None = None
        self._last_activity_at: int | None = None
        self._last_partial_at: int | None = None
        self._last_partial_text: str | None = None
        self._extension_ms = 0
        self._activity = False
        self._force_final = False

    # -- engine controls ----------------------------------------------------

    def effective_endpoint_ms(self) -> int:
        return self.config.endpoint_ms + self._extension_ms

    def extend_endpoint(self, extra_ms: int) -> None:
        self._extension_ms = extra_ms

    def clear_extension(self) -> None:
        self._extension_ms = 0

    def close_segment(self) -> None:
        self._segment_open = False

    def open_segment(self) -> None:
        self._segment_open = True

    def consume_activity(self) -> bool:
        """Whether any new speech arrived since the last call."""
        activity, self._activity = self._activity, False
        return activity

    def segment_started_at(self) -> int | None:
        return self._segment_started_at

    # -- input --------------------------------------------------------------

    def push_typing(self, event: TypingEvent) -> None:
        if not self._segment_open:
            raise SegmentClosed("recognizer segment is closed")
        if self._last_activity_at is not None and event.at_ms < self._last_activity_at:
            raise ValueError("typing timestamps must be non-decreasing")
        if self._segment_started_at is None:
            self._segment_started_at = event.at_ms
        self._buffer += event.char
        self._last_activity_at = event.at_ms
        self._activity = True

    def push_utterance(self, text: str, at_ms: int) -> None:
        """Whole-message input (console send); finalizes on the next tick."""
        if not self._segment_open:
            raise SegmentClosed("recognizer segment is closed")
        if not text:
            raise EmptyUtterance("utterance text must be nonempty")
        if self._segment_started_at is None:
            self._segment_started_at = at_ms
        self._buffer += text
        self._last_activity_at = at_ms
        self._activity = True
        self._force_final = True

    # -- clock --------------------------------------------------------------

    def tick(self, now_ms: int, floor_open: bool = True) -> list[AsrEvent]:
        events: list[AsrEvent] = []
        if not self._segment_open or not self._buffer:
            return events

        if self._force_final:
            if self._last_partial_text != self._buffer:
                events.append(AsrPartial(text=self._buffer, at_ms=now_ms))
            events.append(
                AsrFinal(
                    text=self._buffer,
                    silence_ms=self.effective_endpoint_ms(),
                    at_ms=now_ms,
                )
            )
            self._reset_segment()
            return events

        partial_anchor = self._last_partial_at
        if partial_anchor is None:
            partial_anchor = self._segment_started_at
        assert partial_anchor is not None
        if (
            now_ms - partial_anchor >= self.config.partial_interval_ms
            and self._buffer != self._last_partial_text
        ):
            events.append(AsrPartial(text=self._buffer, at_ms=now_ms))
            self._last_partial_at = now_ms
            self._last_partial_text = self._buffer

        assert self._last_activity_at is not None
        silence = now_ms - self._last_activity_at
        if silence >= self.effective_endpoint_ms():
            if self._last_partial_text != self._buffer:
                events.append(AsrPartial(text=self._buffer, at_ms=now_ms))
            events.append(AsrFinal(text=self._buffer, silence_ms=silence, at_ms=now_ms))
            self._reset_segment()
        return events

    def _reset_segment(self) -> None:
        self._buffer = ""
        self._segment_started_at = None
        self._last_activity_at = None
        self._last_partial_at = None
        self._last_partial_text = None
        self._force_final = False


@dataclass(frozen=True)
class ScriptedUtterance:
    text: str
    pre_silence_ms: int
    post_silence_ms: int
    barge_in: bool = False


def load_asr_script(path: str) -> list[ScriptedUtterance]:
    """Load a JSON Lines replay script of scripted utterances."""
    import json

    entries: list[ScriptedUtterance] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedAsrScript(f"line {lineno}: invalid JSON: {exc.msg}") from None
            if not isinstance(raw, dict):
                raise MalformedAsrScript(f"line {lineno}: expected an object")
            unknown = set(raw) - {"text", "pre_silence_ms", "post_silence_ms", "barge_in"}
            if unknown:
                raise MalformedAsrScript(f"line {lineno}: unknown keys {sorted(unknown)}")
            text = raw.get("text")
            if not isinstance(text, str) or not text:
                raise MalformedAsrScript(f"line {lineno}: text must be a nonempty string")
            pre = raw.get("pre_silence_ms", 0)
            post = raw.get("post_silence_ms", 0)
            for name, value in (("pre_silence_ms", pre), ("post_silence_ms", post)):
                if not isinstance(value, int) or value < 0:
                    raise MalformedAsrScript(
                        f"line {lineno}: {name} must be a non-negative int"
                    )
            barge = raw.get("barge_in", False)
            if not isinstance(barge, bool):
                raise MalformedAsrScript(f"line {lineno}: barge_in must be a boolean")
            entries.append(
                ScriptedUtterance(
                    text=text, pre_silence_ms=pre, post_silence_ms=post, barge_in=barge
                )
            )
    return entries


class ScriptedSpeechSource:
    """Replays scripted utterances through the recognizer event interface.

    Each utterance surfaces as exactly one partial at activation and one
    final once its declared trailing silence (never less than the effective
    endpoint, holds included) has elapsed. Ordinary entries wait for the
    floor to be open before their leading silence starts counting; entries
    flagged `barge_in` count from the previous final regardless of who holds
    the floor, which is how replays force overlap.
    """

    def __init__(
        self,
        entries: list[ScriptedUtterance] | None = None,
        config: RecognizerConfig | None = None,
    ):
        self.config = config or RecognizerConfig()
        self._entries = deque(entries or [])
        self._active: ScriptedUtterance | None = None
        self._activated_at = 0
        self._prev_final_at = 0
        self._ready_since: int | None = None
        self._segment_open = True
        self._extension_ms = 0
        self._activity = False

    # -- engine controls ----------------------------------------------------

    def effective_endpoint_ms(self) -> int:
        return self.config.endpoint_ms + self._extension_ms

    def extend_endpoint(self, extra_ms: int) -> None:
        self._extension_ms = extra_ms

    def clear_extension(self) -> None:
        self._extension_ms = 0

    def close_segment(self) -> None:
        self._segment_open = False

    def open_segment(self) -> None:
        self._segment_open = True

    def consume_activity(self) -> bool:
        activity, self._activity = self._activity, False
        return activity

    def segment_started_at(self) -> int | None:
        return self._activated_at if self._active else None

    # -- direct replay primitive ---------------------------------------------

    def push_scripted_utterance(
        self, text: str, pre_silence_ms: int, post_silence_ms: int
    ) -> list[AsrEvent]:
        """Emit one partial/final pair at deterministic logical times.

        Standalone primitive: the internal cursor starts at the previous
        final (or zero) so successive calls yield strictly increasing times.
        """
        if not text:
            raise EmptyUtterance("utterance text must be nonempty")
        if not self._segment_open:
            raise SegmentClosed("recognizer segment is closed")
        started = self._prev_final_at + pre_silence_ms
        silence = max(post_silence_ms, self.effective_endpoint_ms())
        final_at = started + silence
        self._prev_final_at = final_at
        return [
            AsrPartial(text=text, at_ms=started),
            AsrFinal(text=text, silence_ms=silence, at_ms=final_at),
        ]

    # -- clock --------------------------------------------------------------

    def tick(self, now_ms: int, floor_open: bool = True) -> list[AsrEvent]:
        events: list[AsrEvent] = []
        if not self._segment_open:
            return events

        if self._active is None and self._entries:
            head = self._entries[0]
            if head.barge_in:
                if now_ms >= self._prev_final_at + head.pre_silence_ms:
                    self._activate(head, now_ms, events)
            elif floor_open:
                if self._ready_since is None:
                    self._ready_since = now_ms
                if now_ms - self._ready_since >= head.pre_silence_ms:
                    self._activate(head, now_ms, events)
            else:
                self._ready_since = None

        if self._active is not None:
            silence = now_ms - self._activated_at
            required = max(self._active.post_silence_ms, self.effective_endpoint_ms())
            if silence >= required:
                events.append(
                    AsrFinal(text=self._active.text, silence_ms=silence, at_ms=now_ms)
                )
                self._active = None
                self._prev_final_at = now_ms
                self._ready_since = None
        return events

    def _activate(
        self, entry: ScriptedUtterance, now_ms: int, events: list[AsrEvent]
    ) -> None:
        self._entries.popleft()
        self._active = entry
        self._activated_at = now_ms
        self._activity = True
        events.append(AsrPartial(text=entry.text, at_ms=now_ms))
