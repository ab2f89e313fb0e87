// Pure projection of the session event stream into the console view state.
// No dialogue logic lives here: every visible change corresponds to one
// received event, and replaying the same events always reproduces the same
// final state. Events at or below lastSeq are ignored, which is what makes
// reconnect-with-resend safe.

import { AssetRef, SessionEvent } from "./events.js";

export type ConnectionStatus = "connecting" | "open" | "closed" | "not_found";
export type Floor = "UserSpeaking" | "SystemSpeaking" | "OpenFloor" | "Deliberating";

export interface Message {
  role: "user" | "system";
  text: string;
  atMs: number;
  pending: boolean; // user bubble still being typed
  playing: boolean; // system bubble still "speaking"
  durationMs: number;
  interrupted: boolean;
  source?: string;
}

export interface CommandLogEntry {
  atMs: number;
  label: string;
}

export interface ConsoleViewState {
  connection: ConnectionStatus;
  phase: string;
  budgetMs: number | null;
  lastEventAtMs: number;
  floor: Floor;
  lastSeq: number;
  messages: Message[];
  commandLog: CommandLogEntry[];
  images: AssetRef[];
  breachCount: number;
  bargeInCount: number;
  lastTurnClass: number | null;
  ended: boolean;
  goalAchieved: boolean | null;
}

export function initialState(budgetMs: number | null = null): ConsoleViewState {
  return {
    connection: "connecting",
    phase: "Introduction",
    budgetMs,
    lastEventAtMs: 0,
    floor: "OpenFloor",
    lastSeq: -1,
    messages: [],
    commandLog: [],
    images: [],
    breachCount: 0,
    bargeInCount: 0,
    lastTurnClass: null,
    ended: false,
    goalAchieved: null,
  };
}

export function remainingBudgetMs(state: ConsoleViewState): number | null {
  if (state.budgetMs === null) return null;
  return Math.max(0, state.budgetMs - state.lastEventAtMs);
}

export function setConnection(
  state: ConsoleViewState,
  connection: ConnectionStatus
): ConsoleViewState {
  return { ...state, connection };
}

function lastIndex(
  messages: Message[],
  predicate: (message: Message) => boolean
): number {
  for (let i = messages.length - 1; i >= 0; i--) {
    if (predicate(messages[i])) return i;
  }
  return -1;
}

function replaceAt(messages: Message[], index: number, patch: Partial<Message>): Message[] {
  const next = messages.slice();
  next[index] = { ...next[index], ...patch };
  return next;
}

export function reduce(state: ConsoleViewState, event: SessionEvent): ConsoleViewState {
  if (event.seq <= state.lastSeq) {
    return state; // duplicate (reconnect resend); seq is the dedupe key
  }
  const base: ConsoleViewState = {
    ...state,
    lastSeq: event.seq,
    lastEventAtMs: event.at_ms,
  };
  const payload = event.payload;

  switch (event.kind) {
    case "UserPartial": {
      const text = String(payload.text ?? "");
      const pending = lastIndex(base.messages, (m) => m.role === "user" && m.pending);
      const messages =
        pending >= 0
          ? replaceAt(base.messages, pending, { text })
          : [
              ...base.messages,
              {
                role: "user" as const,
                text,
                atMs: event.at_ms,
                pending: true,
                playing: false,
                durationMs: 0,
                interrupted: false,
              },
            ];
      return { ...base, messages, floor: "UserSpeaking" };
    }

    case "UserFinal": {
      const text = String(payload.text ?? "");
      const pending = lastIndex(base.messages, (m) => m.role === "user" && m.pending);
      const messages =
        pending >= 0
          ? replaceAt(base.messages, pending, { text, pending: false })
          : [
              ...base.messages,
              {
                role: "user" as const,
                text,
                atMs: event.at_ms,
                pending: false,
                playing: false,
                durationMs: 0,
                interrupted: false,
              },
            ];
      const floor: Floor =
        base.phase === "MetaControlled" ? "Deliberating" : "OpenFloor";
      return { ...base, messages, floor };
    }

    case "SystemUtteranceStart": {
      const message: Message = {
        role: "system",
        text: String(payload.text ?? ""),
        atMs: event.at_ms,
        pending: false,
        playing: true,
        durationMs: Number(payload.duration_ms ?? 0),
        interrupted: false,
        source: String(payload.source ?? "meta"),
      };
      return { ...base, messages: [...base.messages, message], floor: "SystemSpeaking" };
    }

    case "SystemUtteranceEnd": {
      const playing = lastIndex(base.messages, (m) => m.role === "system" && m.playing);
      const aborted = Boolean(payload.aborted);
      const messages =
        playing >= 0
          ? replaceAt(base.messages, playing, {
              text: String(payload.text ?? ""),
              playing: false,
              interrupted: aborted || base.messages[playing].interrupted,
            })
          : base.messages;
      return { ...base, messages, floor: "OpenFloor" };
    }

    case "BargeIn": {
      const playing = lastIndex(base.messages, (m) => m.role === "system" && m.playing);
      const messages =
        playing >= 0
          ? replaceAt(base.messages, playing, { interrupted: true })
          : base.messages;
      return {
        ...base,
        messages,
        bargeInCount: base.bargeInCount + 1,
        floor: "UserSpeaking",
      };
    }

    case "CommandIssued": {
      const entry = { atMs: event.at_ms, label: `command ${payload.digit}` };
      return { ...base, commandLog: [...base.commandLog, entry] };
    }

    case "EffectExecuted": {
      const effect = String(payload.effect ?? "");
      const entry = { atMs: event.at_ms, label: effect };
      let images = base.images;
      if (effect === "ShowImages" && Array.isArray(payload.assets)) {
        images = (payload.assets as AssetRef[]).map((asset) => ({
          spot_name: asset.spot_name,
          uri: asset.uri,
          caption: asset.caption,
        }));
      }
      return { ...base, commandLog: [...base.commandLog, entry], images };
    }

    case "TurnClassAssigned": {
      const action = String(payload.action ?? "");
      const floor: Floor = action === "HoldFloor" ? "UserSpeaking" : "Deliberating";
      return { ...base, lastTurnClass: Number(payload.digit), floor };
    }

    case "PhaseChanged": {
      return { ...base, phase: String(payload.phase ?? base.phase) };
    }

    case "ProtocolBreach": {
      const recovery = String(payload.recovery ?? "");
      const floor: Floor = recovery === "skip_turn" ? "OpenFloor" : "Deliberating";
      return { ...base, breachCount: base.breachCount + 1, floor };
    }

    case "SessionEnded": {
      return {
        ...base,
        ended: true,
        goalAchieved: Boolean(payload.goal_achieved),
        floor: "OpenFloor",
      };
    }

    default:
      return base;
  }
}

export function reduceAll(
  state: ConsoleViewState,
  events: SessionEvent[]
): ConsoleViewState {
  return events.reduce(reduce, state);
}
