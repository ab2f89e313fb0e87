// WebSocket client: subscribes to the event stream and forwards input.
// On every (re)connect the server resends the full history; the reducer's
// seq dedupe makes that idempotent, so resume needs no protocol of its own.

import { ClientMessage, SessionEvent, isSessionEvent } from "./events.js";

export interface WebSocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: string }) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
}

export type WebSocketFactory = (url: string) => WebSocketLike;

export type ConnectionEvent = "connecting" | "open" | "closed" | "not_found";

export interface ClientHandlers {
  onEvent(event: SessionEvent): void;
  onStatus(status: ConnectionEvent): void;
}

export interface ClientOptions {
  reconnectDelayMs?: number;
  webSocketFactory?: WebSocketFactory;
  scheduler?: (fn: () => void, delayMs: number) => void;
}

const defaultFactory: WebSocketFactory = (url) =>
  new WebSocket(url) as unknown as WebSocketLike;

export function eventsUrl(baseUrl: string, sessionId: string): string {
  const ws = baseUrl.replace(/^http/, "ws").replace(/\/$/, "");
  return `${ws}/sessions/${sessionId}/events`;
}

export class ConsoleClient {
  private socket: WebSocketLike | null = null;
  private closedByUser = false;
  private readonly reconnectDelayMs: number;
  private readonly factory: WebSocketFactory;
  private readonly schedule: (fn: () => void, delayMs: number) => void;

  constructor(
    private readonly baseUrl: string,
    private readonly sessionId: string,
    private readonly handlers: ClientHandlers,
    options: ClientOptions = {}
  ) {
    this.reconnectDelayMs = options.reconnectDelayMs ?? 1000;
    this.factory = options.webSocketFactory ?? defaultFactory;
    this.schedule =
      options.scheduler ?? ((fn, delay) => setTimeout(fn, delay));
  }

  connect(): void {
    this.closedByUser = false;
    this.handlers.onStatus("connecting");
    const socket = this.factory(eventsUrl(this.baseUrl, this.sessionId));
    this.socket = socket;
    socket.onopen = () => this.handlers.onStatus("open");
    socket.onmessage = (message) => {
      let parsed: unknown;
      try {
        parsed = JSON.parse(message.data);
      } catch {
        return;
      }
      if (isSessionEvent(parsed)) {
        this.handlers.onEvent(parsed);
      }
    };
    socket.onclose = (ev) => {
      const code = (ev as { code?: number } | undefined)?.code;
      if (code === 4404) {
        // the session does not exist; reconnecting would never help
        this.closedByUser = true;
        this.handlers.onStatus("not_found");
        return;
      }
      this.handlers.onStatus("closed");
      if (!this.closedByUser) {
        this.schedule(() => this.connect(), this.reconnectDelayMs);
      }
    };
    socket.onerror = () => {
      // the close handler drives reconnection
    };
  }

  close(): void {
    this.closedByUser = true;
    this.socket?.close();
  }

  private send(message: ClientMessage): void {
    this.socket?.send(JSON.stringify(message));
  }

  sendTyping(char: string): void {
    if (char) this.send({ type: "typing", char });
  }

  sendPause(): void {
    this.send({ type: "pause" });
  }

  sendUtterance(text: string): void {
    if (text) this.send({ type: "utterance", text });
  }
}

export async function createSession(
  baseUrl: string,
  fetchImpl: typeof fetch = fetch
): Promise<{ sessionId: string; budgetMs: number }> {
  const response = await fetchImpl(`${baseUrl.replace(/\/$/, "")}/sessions`, {
    method: "POST",
  });
  if (!response.ok) {
    throw new Error(`session creation failed: HTTP ${response.status}`);
  }
  const body = (await response.json()) as { session_id: string; budget_ms: number };
  return { sessionId: body.session_id, budgetMs: body.budget_ms };
}
