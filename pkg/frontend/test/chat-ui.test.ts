import { beforeEach, describe, expect, it, vi } from "vitest";

import { ChatController, resultColumns, sortRows } from "../src/chat-core.js";
import { AnswerRow, QueryFrame } from "../src/protocol.js";
import { ViewElements, render } from "../src/view.js";

const PUMP_QUERY = "Who is the manufacturer of pump 14569?";
const PUMP_RECORD = {
  component_id: 14569,
  component_type: "End Suction Pump",
  manufacturer: "PACO",
  room_name: "06-470",
  level_number: 6,
};

const STAGE_SEQUENCE = [
  { stage: "intent", summary: "[search in BIM] for 'Pumps'" },
  { stage: "parameter", summary: "filter_para: component_id; proj_para: manufacturer" },
  { stage: "value", summary: "extr_value: '14569'; pred_value: '14569'" },
  { stage: "db_execute", summary: "1 records matched" },
  { stage: "summary", summary: "The manufacturer of pump 14569 is PACO." },
];

class StubTransport {
  sent: QueryFrame[] = [];
  send(frame: QueryFrame): void {
    this.sent.push(frame);
  }
}

function domElements(): ViewElements {
  document.body.innerHTML = `
    <div id="banner" class="banner hidden"></div>
    <div id="messages"></div>
    <div id="timeline" class="timeline hidden"></div>
    <div id="results"></div>
    <div id="trace"></div>
    <input id="input" type="text">
    <button id="send">Send</button>`;
  return {
    banner: document.getElementById("banner") as HTMLElement,
    messages: document.getElementById("messages") as HTMLElement,
    timeline: document.getElementById("timeline") as HTMLElement,
    results: document.getElementById("results") as HTMLElement,
    trace: document.getElementById("trace") as HTMLElement,
    input: document.getElementById("input") as HTMLInputElement,
    send: document.getElementById("send") as HTMLButtonElement,
  };
}

function setup() {
  const elements = domElements();
  const transport = new StubTransport();
  const controller = new ChatController(
    transport,
    () => render(controller.state, elements),
  );
  controller.setConnected(true);
  return { elements, transport, controller };
}

function answerFrame(requestId: string, overrides: Record<string, unknown> = {}) {
  return {
    type: "answer",
    request_id: requestId,
    text: "The manufacturer of pump 14569 is PACO. It is located in room 06-470 on level 6.",
    retrieved_ids: ["14569"],
    rows: [{ id: "14569", record: PUMP_RECORD }] as AnswerRow[],
    ok: true,
    ...overrides,
  };
}

describe("chat smoke against a scripted service", () => {
  beforeEach(() => {
    vi.restoreAllMocks();
  });

  it("renders one user bubble, a 5-step timeline, one assistant bubble, and the result row", () => {
    const { elements, transport, controller } = setup();
    expect(controller.submit(PUMP_QUERY)).toBe(true);
    expect(transport.sent).toHaveLength(1);
    const requestId = transport.sent[0]!.request_id;

    for (const step of STAGE_SEQUENCE) {
      controller.handleFrame({
        type: "stage", request_id: requestId, duration: 0.001, ...step,
      });
    }
    controller.handleFrame(answerFrame(requestId));

    expect(document.querySelectorAll(".msg.user")).toHaveLength(1);
    expect(document.querySelectorAll(".timeline .step")).toHaveLength(5);
    expect(document.querySelectorAll(".msg.assistant")).toHaveLength(1);
    const row = document.querySelector('tr[data-id="14569"]');
    expect(row).not.toBeNull();
    expect(row!.textContent).toContain("PACO");
    const stages = [...document.querySelectorAll(".timeline .step")].map(
      (node) => (node as HTMLElement).dataset.stage,
    );
    expect(stages).toEqual(["intent", "parameter", "value", "db_execute", "summary"]);
  });

  it("renders the failure text and clears the results panel on a failed answer", () => {
    const { transport, controller } = setup();
    controller.submit(PUMP_QUERY);
    const goodId = transport.sent[0]!.request_id;
    controller.handleFrame(answerFrame(goodId));
    expect(document.querySelector('tr[data-id="14569"]')).not.toBeNull();

    controller.submit("gibberish request");
    const requestId = transport.sent[1]!.request_id;
    controller.handleFrame(answerFrame(requestId, {
      text: "Sorry, I could not interpret that request. (failed at the intent stage)",
      ok: false,
      failure_stage: "intent",
      retrieved_ids: [],
      rows: [],
    }));

    const failed = document.querySelector(".msg.assistant.failed");
    expect(failed).not.toBeNull();
    expect(failed!.textContent).toContain("Sorry, I could not interpret that request.");
    expect(failed!.textContent).toContain("intent");
    expect(document.querySelector('tr[data-id="14569"]')).toBeNull();
    expect(document.querySelector("#results .empty")).not.toBeNull();
  });

  it("disables input while a query is in flight and blocks empty input", () => {
    const { elements, transport, controller } = setup();
    expect(controller.submit("   ")).toBe(false);
    expect(transport.sent).toHaveLength(0);

    controller.submit(PUMP_QUERY);
    expect(elements.send.disabled).toBe(true);
    expect(controller.submit("another while busy")).toBe(false);
    expect(transport.sent).toHaveLength(1);

    controller.handleFrame(answerFrame(transport.sent[0]!.request_id));
    expect(elements.send.disabled).toBe(false);
  });

  it("keeps exactly one assistant message per request", () => {
    const { transport, controller } = setup();
    const warn = vi.spyOn(console, "warn").mockImplementation(() => {});
    controller.submit(PUMP_QUERY);
    const requestId = transport.sent[0]!.request_id;
    controller.handleFrame(answerFrame(requestId));
    controller.handleFrame(answerFrame(requestId, { text: "duplicate" }));
    expect(document.querySelectorAll(".msg.assistant")).toHaveLength(1);
    expect(warn).toHaveBeenCalled();
  });

  it("ignores malformed and stale frames without crashing", () => {
    const { transport, controller } = setup();
    const warn = vi.spyOn(console, "warn").mockImplementation(() => {});
    controller.submit(PUMP_QUERY);
    controller.handleRaw("{not json");
    controller.handleFrame({ some: "nonsense" });
    controller.handleFrame({ type: "stage", request_id: "stale", stage: "intent",
                             summary: "x", duration: 0 });
    expect(warn).toHaveBeenCalledTimes(3);
    expect(document.querySelectorAll(".msg.assistant")).toHaveLength(0);
    controller.handleFrame(answerFrame(transport.sent[0]!.request_id));
    expect(document.querySelectorAll(".msg.assistant")).toHaveLength(1);
  });

  it("shows a reconnect banner when the connection drops", () => {
    const { elements, controller } = setup();
    controller.setConnected(false);
    expect(elements.banner.classList.contains("hidden")).toBe(false);
    expect(elements.banner.textContent).toContain("Connection lost");
    expect(elements.send.disabled).toBe(true);
    controller.setConnected(true);
    expect(elements.banner.classList.contains("hidden")).toBe(true);
  });
});

describe("results table helpers", () => {
  const rows: AnswerRow[] = [
    { id: "2", record: { manufacturer: "Trane", level_number: 4 } },
    { id: "10", record: { manufacturer: "PACO", level_number: 6 } },
    { id: "1", record: { manufacturer: "Grundfos", level_number: 2 } },
  ];

  it("orders columns by the preferred schema order first", () => {
    expect(resultColumns(rows, ["level_number", "manufacturer", "unused"])).toEqual(
      ["level_number", "manufacturer"]);
    expect(resultColumns(rows)).toEqual(["manufacturer", "level_number"]);
  });

  it("sorts numerically when both values are numbers", () => {
    const sorted = sortRows(rows, "id", "asc").map((row) => row.id);
    expect(sorted).toEqual(["1", "2", "10"]);
    const byText = sortRows(rows, "manufacturer", "desc").map((row) => row.record.manufacturer);
    expect(byText).toEqual(["Trane", "PACO", "Grundfos"]);
  });

  it("returns a copy when no sort column is active", () => {
    const copy = sortRows(rows, null);
    expect(copy).toEqual(rows);
    expect(copy).not.toBe(rows);
  });
});
