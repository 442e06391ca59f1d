// Chat state machine, kept free of DOM and transport so it is directly
// testable. One query is in flight at a time; the results panel always
// reflects the most recent completed request.

import {
  AnswerFrame,
  AnswerRow,
  QueryFrame,
  StageFrame,
  parseServerFrame,
} from "./protocol.js";

export type Author = "user" | "assistant";

export interface ChatMessage {
  author: Author;
  text: string;
  timestamp: number;
  requestId: string;
  failed?: boolean;
  failureStage?: string;
}

export interface TimelineStep {
  stage: string;
  summary: string;
  duration: number;
  promptText?: string;
}

export interface ChatState {
  connected: boolean;
  busy: boolean;
  messages: ChatMessage[];
  timeline: TimelineStep[];
  results: AnswerRow[];
  retrievedIds: string[];
  banner: string | null;
}

export interface Transport {
  send(frame: QueryFrame): void;
}

export class ChatController {
  readonly state: ChatState = {
    connected: false,
    busy: false,
    messages: [],
    timeline: [],
    results: [],
    retrievedIds: [],
    banner: null,
  };

  private transport: Transport;
  private onChange: () => void;
  private counter = 0;
  private currentRequest: string | null = null;
  private answered = new Set<string>();
  private now: () => number;

  constructor(transport: Transport, onChange: () => void = () => {}, now = Date.now) {
    this.transport = transport;
    this.onChange = onChange;
    this.now = now;
  }

  /** True when a non-empty query can be sent right now. */
  canSubmit(text: string): boolean {
    return this.state.connected && !this.state.busy && text.trim().length > 0;
  }

  submit(text: string): boolean {
    const trimmed = text.trim();
    if (!this.canSubmit(trimmed)) return false;
    const requestId = `q${++this.counter}`;
    this.currentRequest = requestId;
    this.state.busy = true;
    this.state.timeline = [];
    this.state.results = [];
    this.state.retrievedIds = [];
    this.state.messages.push({
      author: "user",
      text: trimmed,
      timestamp: this.now(),
      requestId,
    });
    this.transport.send({ type: "query", request_id: requestId, text: trimmed });
    this.onChange();
    return true;
  }

  handleRaw(data: string): void {
    let parsed: unknown;
    try {
      parsed = JSON.parse(data);
    } catch {
      console.warn("ignoring non-JSON frame", data);
      return;
    }
    this.handleFrame(parsed);
  }

  handleFrame(raw: unknown): void {
    const frame = parseServerFrame(raw);
    if (frame === null) {
      console.warn("ignoring malformed frame", raw);
      return;
    }
    if (frame.request_id !== this.currentRequest) {
      console.warn("ignoring frame for stale request", frame.request_id);
      return;
    }
    if (frame.type === "stage") {
      this.applyStage(frame);
    } else {
      this.applyAnswer(frame);
    }
    this.onChange();
  }

  private applyStage(frame: StageFrame): void {
    this.state.timeline.push({
      stage: frame.stage,
      summary: frame.summary,
      duration: frame.duration,
      promptText: frame.prompt_text,
    });
  }

  private applyAnswer(frame: AnswerFrame): void {
    if (this.answered.has(frame.request_id)) {
      console.warn("duplicate answer for request", frame.request_id);
      return;
    }
    this.answered.add(frame.request_id);
    this.state.busy = false;
    this.state.messages.push({
      author: "assistant",
      text: frame.text,
      timestamp: this.now(),
      requestId: frame.request_id,
      failed: !frame.ok,
      failureStage: frame.failure_stage,
    });
    if (frame.ok) {
      this.state.results = frame.rows;
      this.state.retrievedIds = frame.retrieved_ids;
    } else {
      this.state.results = [];
      this.state.retrievedIds = [];
    }
  }

  setConnected(connected: boolean): void {
    this.state.connected = connected;
    this.state.banner = connected ? null : "Connection lost. Reconnecting...";
    if (!connected && this.state.busy) {
      // the in-flight request will never answer; unlock the input
      this.state.busy = false;
      this.currentRequest = null;
    }
    this.onChange();
  }
}

/** Column order for the results table: id column first, then record keys. */
export function resultColumns(rows: AnswerRow[], preferred: string[] = []): string[] {
  const seen = new Set<string>();
  const columns: string[] = [];
  for (const name of preferred) {
    if (rows.some((row) => name in row.record) && !seen.has(name)) {
      seen.add(name);
      columns.push(name);
    }
  }
  for (const row of rows) {
    for (const name of Object.keys(row.record)) {
      if (!seen.has(name)) {
        seen.add(name);
        columns.push(name);
      }
    }
  }
  return columns;
}

export type SortDirection = "asc" | "desc";

export function sortRows(
  rows: AnswerRow[],
  column: string | null,
  direction: SortDirection = "asc",
): AnswerRow[] {
  if (column === null) return rows.slice();
  const factor = direction === "asc" ? 1 : -1;
  return rows.slice().sort((a, b) => {
    const left = column === "id" ? a.id : a.record[column];
    const right = column === "id" ? b.id : b.record[column];
    const leftNum = Number(left);
    const rightNum = Number(right);
    if (!Number.isNaN(leftNum) && !Number.isNaN(rightNum)) {
      return (leftNum - rightNum) * factor;
    }
    return String(left ?? "").localeCompare(String(right ?? "")) * factor;
  });
}
