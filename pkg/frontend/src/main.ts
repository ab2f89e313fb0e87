// Console wiring: create a session, subscribe, forward keystrokes.
// Keystroke timing is the speech signal: every printable key goes to the
// server the moment it is captured, and pausing is what ends an utterance.

import { ConsoleClient, createSession } from "./client.js";
import { initialState, reduce, ConsoleViewState } from "./reducer.js";
import { render, RenderTargets } from "./render.js";

function mustGet(id: string): HTMLElement {
  const element = document.getElementById(id);
  if (!element) throw new Error(`missing element #${id}`);
  return element;
}

async function start(): Promise<void> {
  const baseUrl = window.location.origin;
  const targets: RenderTargets = {
    status: mustGet("status"),
    phase: mustGet("phase"),
    countdown: mustGet("countdown"),
    floor: mustGet("floor"),
    messages: mustGet("messages"),
    images: mustGet("images"),
    commandLog: mustGet("command-log"),
    breachBanner: mustGet("breach-banner"),
  };
  const input = mustGet("speech-input") as HTMLInputElement;

  const { sessionId, budgetMs } = await createSession(baseUrl);
  let state: ConsoleViewState = initialState(budgetMs);
  const repaint = () => render(state, targets);

  const client = new ConsoleClient(baseUrl, sessionId, {
    onEvent(event) {
      state = reduce(state, event);
      repaint();
    },
    onStatus(status) {
      state = { ...state, connection: status };
      input.disabled = status !== "open";
      repaint();
    },
  });
  client.connect();

  input.addEventListener("keydown", (keyEvent) => {
    if (keyEvent.key === "Enter") {
      // everything was already streamed keystroke by keystroke; Enter just
      // clears the local echo (the server's silence timer ends the turn)
      input.value = "";
      client.sendPause();
      keyEvent.preventDefault();
      return;
    }
    if (keyEvent.key.length === 1 && !keyEvent.ctrlKey && !keyEvent.metaKey) {
      client.sendTyping(keyEvent.key);
    }
  });

  // repaint on a short timer so progressive playback is visible
  window.setInterval(repaint, 120);
}

start().catch((error) => {
  const status = document.getElementById("status");
  if (status) status.textContent = `error: ${error}`;
});
