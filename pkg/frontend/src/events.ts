// Wire types for the session event stream (see ../../docs/event-schema.md).
// The console renders exclusively from these events.

export type EventKind =
  | "UserPartial"
  | "UserFinal"
  | "SystemUtteranceStart"
  | "SystemUtteranceEnd"
  | "CommandIssued"
  | "EffectExecuted"
  | "TurnClassAssigned"
  | "PhaseChanged"
  | "BargeIn"
  | "ProtocolBreach"
  | "SessionEnded";

export interface SessionEvent {
  seq: number;
  at_ms: number;
  kind: EventKind;
  payload: Record<string, unknown>;
}

export interface AssetRef {
  spot_name: string;
  uri: string;
  caption: string;
}

export type ClientMessage =
  | { type: "typing"; char: string }
  | { type: "pause" }
  | { type: "utterance"; text: string };

export function isSessionEvent(value: unknown): value is SessionEvent {
  if (typeof value !== "object" || value === null) return false;
  const candidate = value as Partial<SessionEvent>;
  return (
    typeof candidate.seq === "number" &&
    typeof candidate.at_ms === "number" &&
    typeof candidate.kind === "string" &&
    typeof candidate.payload === "object"
  );
}
