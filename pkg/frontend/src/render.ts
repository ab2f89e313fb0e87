// DOM rendering of the view state. System bubbles reveal progressively at
// the engine's speaking rate so a barge-in has a visible target; the reveal
// is cosmetic (wall-clock), the underlying state stays event-driven.

import { ConsoleViewState, Message, remainingBudgetMs } from "./reducer.js";

export interface RenderTargets {
  status: HTMLElement;
  phase: HTMLElement;
  countdown: HTMLElement;
  floor: HTMLElement;
  messages: HTMLElement;
  images: HTMLElement;
  commandLog: HTMLElement;
  breachBanner: HTMLElement;
}

const playbackStartedWall = new Map<number, number>();

function visibleText(message: Message, nowWallMs: number): string {
  if (!message.playing || message.durationMs <= 0) return message.text;
  let started = playbackStartedWall.get(message.atMs);
  if (started === undefined) {
    started = nowWallMs;
    playbackStartedWall.set(message.atMs, started);
  }
  const ratio = Math.min(1, (nowWallMs - started) / message.durationMs);
  return message.text.slice(0, Math.ceil(message.text.length * ratio));
}

function formatCountdown(ms: number | null): string {
  if (ms === null) return "--:--";
  const total = Math.ceil(ms / 1000);
  const minutes = Math.floor(total / 60);
  const seconds = total % 60;
  return `${minutes}:${String(seconds).padStart(2, "0")}`;
}

export function render(
  state: ConsoleViewState,
  targets: RenderTargets,
  nowWallMs: number = Date.now()
): void {
  targets.status.textContent =
    state.connection === "not_found" ? "session not found" : state.connection;
  targets.status.dataset.status = state.connection;
  targets.phase.textContent = state.ended ? "Ended" : state.phase;
  targets.countdown.textContent = formatCountdown(remainingBudgetMs(state));
  targets.floor.textContent = state.floor;
  targets.floor.dataset.floor = state.floor;
  if (state.lastTurnClass !== null) {
    targets.floor.title = `last speech class: ${state.lastTurnClass}`;
  }

  targets.messages.replaceChildren(
    ...state.messages.map((message) => {
      const bubble = document.createElement("div");
      bubble.className = `bubble ${message.role}`;
      if (message.pending) bubble.classList.add("pending");
      if (message.playing) bubble.classList.add("playing");
      const text = document.createElement("span");
      text.textContent = visibleText(message, nowWallMs);
      bubble.appendChild(text);
      if (message.interrupted) {
        const marker = document.createElement("span");
        marker.className = "interrupted-marker";
        marker.textContent = " ⟂ interrupted";
        bubble.appendChild(marker);
      }
      return bubble;
    })
  );

  targets.images.replaceChildren(
    ...state.images.map((asset) => {
      const card = document.createElement("figure");
      card.className = "image-card";
      const img = document.createElement("img");
      img.src = asset.uri;
      img.alt = asset.spot_name;
      const caption = document.createElement("figcaption");
      caption.textContent = `${asset.spot_name} — ${asset.caption}`;
      card.append(img, caption);
      return card;
    })
  );

  targets.commandLog.replaceChildren(
    ...state.commandLog.map((entry) => {
      const row = document.createElement("li");
      row.textContent = `${(entry.atMs / 1000).toFixed(1)}s ${entry.label}`;
      return row;
    })
  );

  targets.breachBanner.hidden = state.breachCount === 0;
  if (state.breachCount > 0) {
    targets.breachBanner.textContent = `${state.breachCount} protocol breach(es) logged`;
  }
}
