// Gateway wire protocol: JSON frames over one WebSocket per session, plus
// the canonical ledger message shapes those frames carry. Assistant content
// keys arrive in production order, so messages are kept as parsed objects
// and never rebuilt key by key.

export type Role = "system" | "user" | "assistant" | "notification";

export type Priority = number | "MIN";

export interface SystemContent {
  text: string;
}

export interface UserContent {
  timestamp: number;
  chat: string;
}

export interface FunctionCallJson {
  payload: Record<string, unknown>;
  request_id: string | null;
}

// Only the keys the generation actually produced are present, in production
// order; interrupted always trails them.
export interface AssistantContent {
  thought?: string;
  functions?: FunctionCallJson[];
  chat?: string;
  interrupted: boolean;
}

export interface ToolSource {
  tool: string;
  request_id: string;
}

export interface NotificationContent {
  source: "system" | ToolSource;
  timestamp: number;
  data: string;
}

export type MessageContent =
  | SystemContent
  | UserContent
  | AssistantContent
  | NotificationContent;

export interface LedgerMessage {
  seq: number;
  role: Role;
  priority: Priority;
  content: MessageContent;
}

export interface ProcessRow {
  pid: number;
  parent: number | null;
  status: "running" | "finished" | "killed";
  origin_request: string | null;
}

// server -> client

export interface SessionOpenFrame {
  kind: "session_open";
  session: string;
  protocol: number;
}

export interface StateChangeFrame {
  kind: "state_change";
  state: string;
}

export interface LedgerAppendFrame {
  kind: "ledger_append";
  message: LedgerMessage;
}

export interface LedgerRewriteFrame {
  kind: "ledger_rewrite";
  seq: number;
  message: LedgerMessage;
}

export interface EmitSegmentFrame {
  kind: "emit_segment";
  text: string;
}

export interface EmissionHaltedFrame {
  kind: "emission_halted";
  emitted: string;
}

export interface ProcessTreeFrame {
  kind: "process_tree";
  processes: ProcessRow[];
}

export interface ClockFrame {
  kind: "clock";
  now_ms: number;
}

export interface ErrorFrame {
  kind: "error";
  detail: string;
}

export type ServerFrame =
  | SessionOpenFrame
  | StateChangeFrame
  | LedgerAppendFrame
  | LedgerRewriteFrame
  | EmitSegmentFrame
  | EmissionHaltedFrame
  | ProcessTreeFrame
  | ClockFrame
  | ErrorFrame;

// client -> server

export type ClientFrame =
  | { kind: "utterance_start" }
  | { kind: "utterance_end"; text: string }
  | { kind: "kill"; pid: number };

export const INTERRUPT_TOKEN = "<|interrupt|>";

const FRAME_KINDS = new Set<string>([
  "session_open",
  "state_change",
  "ledger_append",
  "ledger_rewrite",
  "emit_segment",
  "emission_halted",
  "process_tree",
  "clock",
  "error",
]);

export function parseServerFrame(raw: string): ServerFrame {
  let frame: { kind?: unknown };
  try {
    frame = JSON.parse(raw) as { kind?: unknown };
  } catch {
    throw new Error(`not a frame: ${raw.slice(0, 120)}`);
  }
  if (
    typeof frame !== "object" ||
    frame === null ||
    Array.isArray(frame) ||
    typeof frame.kind !== "string"
  ) {
    throw new Error(`not a frame: ${raw.slice(0, 120)}`);
  }
  if (!FRAME_KINDS.has(frame.kind)) {
    throw new Error(`unknown frame kind: ${frame.kind}`);
  }
  return frame as ServerFrame;
}
