// Wire types for the chat service. These mirror the server's JSON frames:
// the WebSocket streams one stage frame per pipeline step, then exactly one
// answer frame per request.

export interface QueryFrame {
  type: "query";
  request_id: string;
  text: string;
}

export interface StageFrame {
  type: "stage";
  request_id: string;
  stage: string;
  summary: string;
  duration: number;
  prompt_text?: string;
}

export interface AnswerRow {
  id: string;
  record: Record<string, unknown>;
}

export interface AnswerFrame {
  type: "answer";
  request_id: string;
  text: string;
  retrieved_ids: string[];
  rows: AnswerRow[];
  ok: boolean;
  failure_stage?: string;
}

export type ServerFrame = StageFrame | AnswerFrame;

export function parseServerFrame(raw: unknown): ServerFrame | null {
  if (typeof raw !== "object" || raw === null) return null;
  const frame = raw as Record<string, unknown>;
  if (frame.type === "stage" && typeof frame.stage === "string") {
    return frame as unknown as StageFrame;
  }
  if (frame.type === "answer" && typeof frame.text === "string") {
    const answer = frame as unknown as AnswerFrame;
    return {
      ...answer,
      retrieved_ids: answer.retrieved_ids ?? [],
      rows: answer.rows ?? [],
    };
  }
  return null;
}
