// Console state is a pure fold over received frames: no field survives that
// a replay of the same frames would not rebuild. The ledger view mirrors the
// server's canonical ledger message by message.

import {
  AssistantContent,
  INTERRUPT_TOKEN,
  LedgerMessage,
  NotificationContent,
  ProcessRow,
  ServerFrame,
  SystemContent,
  UserContent,
} from "./protocol.js";

export type Connection = "connecting" | "open" | "closed";

export interface ConsoleState {
  connection: Connection;
  sessionId: string | null;
  protocol: number | null;
  fsmState: string;
  messages: LedgerMessage[];
  emission: string;
  processes: ProcessRow[];
  clockMs: number;
  errors: string[];
}

export function initialState(): ConsoleState {
  return {
    connection: "connecting",
    sessionId: null,
    protocol: null,
    fsmState: "idle",
    messages: [],
    emission: "",
    processes: [],
    clockMs: 0,
    errors: [],
  };
}

export function withConnection(state: ConsoleState, connection: Connection): ConsoleState {
  return { ...state, connection };
}

export function applyFrame(state: ConsoleState, frame: ServerFrame): ConsoleState {
  switch (frame.kind) {
    case "session_open":
      // A (re)opened session streams a full snapshot next; drop stale view.
      return {
        ...initialState(),
        connection: state.connection,
        sessionId: frame.session,
        protocol: frame.protocol,
      };
    case "state_change": {
      // A new generation starts a new speech turn.
      const emission = frame.state === "generating" ? "" : state.emission;
      return { ...state, fsmState: frame.state, emission };
    }
    case "ledger_append":
      return { ...state, messages: insertMessage(state.messages, frame.message) };
    case "ledger_rewrite":
      return {
        ...state,
        messages: state.messages.map((m) => (m.seq === frame.seq ? frame.message : m)),
      };
    case "emit_segment":
      return {
        ...state,
        emission: state.emission ? `${state.emission} ${frame.text}` : frame.text,
      };
    case "emission_halted":
      // Exact spoken prefix replaces the per-sentence approximation.
      return { ...state, emission: frame.emitted };
    case "process_tree":
      return { ...state, processes: frame.processes };
    case "clock":
      return { ...state, clockMs: frame.now_ms };
    case "error":
      return { ...state, errors: [...state.errors, frame.detail] };
  }
}

function insertMessage(messages: LedgerMessage[], message: LedgerMessage): LedgerMessage[] {
  const next = messages.filter((m) => m.seq !== message.seq);
  next.push(message);
  next.sort((a, b) => a.seq - b.seq);
  return next;
}

/** Byte-comparable against GET /debug/sessions/{sid}/ledger. */
export function canonicalLedgerJson(state: ConsoleState): string {
  return JSON.stringify({ messages: state.messages });
}

export interface TranscriptEntry {
  seq: number;
  speaker: "system" | "user" | "assistant" | "notification";
  text: string;
  interrupted: boolean;
}

export interface TranscriptOptions {
  notifications: boolean;
}

export function transcript(
  state: ConsoleState,
  options: TranscriptOptions = { notifications: false },
): TranscriptEntry[] {
  const entries: TranscriptEntry[] = [];
  for (const message of state.messages) {
    if (message.role === "user") {
      const content = message.content as UserContent;
      entries.push({ seq: message.seq, speaker: "user", text: content.chat, interrupted: false });
    } else if (message.role === "assistant") {
      const content = message.content as AssistantContent;
      if (content.chat) {
        entries.push({
          seq: message.seq,
          speaker: "assistant",
          text: content.chat,
          interrupted: content.interrupted,
        });
      }
    } else if (options.notifications && message.role === "notification") {
      const content = message.content as NotificationContent;
      entries.push({
        seq: message.seq,
        speaker: "notification",
        text: content.data,
        interrupted: false,
      });
    } else if (options.notifications && message.role === "system") {
      const content = message.content as SystemContent;
      entries.push({ seq: message.seq, speaker: "system", text: content.text, interrupted: false });
    }
  }
  return entries;
}

export interface PendingTool {
  name: string;
  requestId: string;
}

const REQUEST_SENT = /^Request sent for: (\w+)\. ID: ([0-9a-f]{11})\./;

/** Requests that have a request-sent notification but no response yet. */
export function pendingTools(state: ConsoleState): PendingTool[] {
  const pending = new Map<string, string>();
  for (const message of state.messages) {
    if (message.role !== "notification") {
      continue;
    }
    const content = message.content as NotificationContent;
    if (content.source === "system") {
      const match = REQUEST_SENT.exec(content.data);
      if (match) {
        pending.set(match[2], match[1]);
      }
    } else {
      pending.delete(content.source.request_id);
    }
  }
  return [...pending.entries()].map(([requestId, name]) => ({ name, requestId }));
}

export { INTERRUPT_TOKEN };
