// DOM rendering for the chat state. The dynamic regions are re-rendered
// wholesale on every state change; the store is tiny and single-turn, so
// there is nothing to diff.

import { ChatState, SortDirection, resultColumns, sortRows } from "./chat-core.js";

export interface ViewElements {
  messages: HTMLElement;
  timeline: HTMLElement;
  results: HTMLElement;
  trace: HTMLElement;
  banner: HTMLElement;
  input: HTMLInputElement | HTMLTextAreaElement;
  send: HTMLButtonElement;
}

export interface ViewOptions {
  preferredColumns?: string[];
}

interface SortState {
  column: string | null;
  direction: SortDirection;
}

const sortState: SortState = { column: null, direction: "asc" };

export function render(state: ChatState, el: ViewElements, options: ViewOptions = {}): void {
  renderBanner(state, el.banner);
  renderMessages(state, el.messages, el.timeline);
  renderResults(state, el.results, options.preferredColumns ?? []);
  renderTrace(state, el.trace);
  el.send.disabled = state.busy || !state.connected;
  el.input.disabled = state.busy || !state.connected;
}

function renderBanner(state: ChatState, node: HTMLElement): void {
  node.textContent = state.banner ?? "";
  node.classList.toggle("hidden", state.banner === null);
}

function renderMessages(state: ChatState, messages: HTMLElement, timeline: HTMLElement): void {
  messages.textContent = "";
  for (const message of state.messages) {
    const bubble = document.createElement("div");
    bubble.className = `msg ${message.author}` + (message.failed ? " failed" : "");
    bubble.textContent = message.text;
    if (message.failed && message.failureStage) {
      const stage = document.createElement("span");
      stage.className = "failure-stage";
      stage.textContent = ` [${message.failureStage}]`;
      bubble.appendChild(stage);
    }
    messages.appendChild(bubble);
  }
  renderTimeline(state, timeline);
  messages.appendChild(timeline);
  messages.scrollTop = messages.scrollHeight;
}

function renderTimeline(state: ChatState, node: HTMLElement): void {
  node.textContent = "";
  node.className = "timeline" + (state.timeline.length === 0 ? " hidden" : "");
  const list = document.createElement("ol");
  for (const step of state.timeline) {
    const item = document.createElement("li");
    item.className = "step";
    item.dataset.stage = step.stage;
    item.textContent = `${step.stage}: ${step.summary}`;
    list.appendChild(item);
  }
  node.appendChild(list);
}

function renderResults(state: ChatState, node: HTMLElement, preferred: string[]): void {
  node.textContent = "";
  if (state.results.length === 0) {
    const empty = document.createElement("p");
    empty.className = "empty";
    empty.textContent = state.retrievedIds.length
      ? state.retrievedIds.join(", ")
      : "No retrieved records.";
    node.appendChild(empty);
    return;
  }
  const columns = ["id", ...resultColumns(state.results, preferred)];
  const table = document.createElement("table");
  table.className = "results-table";
  const head = document.createElement("tr");
  for (const column of columns) {
    const cell = document.createElement("th");
    cell.textContent = column;
    if (sortState.column === column) {
      cell.textContent += sortState.direction === "asc" ? " ▲" : " ▼";
    }
    cell.addEventListener("click", () => {
      if (sortState.column === column) {
        sortState.direction = sortState.direction === "asc" ? "desc" : "asc";
      } else {
        sortState.column = column;
        sortState.direction = "asc";
      }
      renderResults(state, node, preferred);
    });
    head.appendChild(cell);
  }
  table.appendChild(head);
  for (const row of sortRows(state.results, sortState.column, sortState.direction)) {
    const tr = document.createElement("tr");
    tr.dataset.id = row.id;
    for (const column of columns) {
      const cell = document.createElement("td");
      const value = column === "id" ? row.id : row.record[column];
      cell.textContent = value === null || value === undefined ? "" : String(value);
      tr.appendChild(cell);
    }
    table.appendChild(tr);
  }
  node.appendChild(table);
}

function renderTrace(state: ChatState, node: HTMLElement): void {
  node.textContent = "";
  if (state.timeline.length === 0) return;
  const details = document.createElement("details");
  const summary = document.createElement("summary");
  summary.textContent = `Trace (${state.timeline.length} stages)`;
  details.appendChild(summary);
  for (const step of state.timeline) {
    const line = document.createElement("div");
    line.className = "trace-line";
    line.textContent = `${step.stage}: ${(step.duration * 1000).toFixed(1)} ms`;
    details.appendChild(line);
    if (step.promptText) {
      const pre = document.createElement("pre");
      pre.className = "trace-prompt";
      pre.textContent = step.promptText;
      details.appendChild(pre);
    }
  }
  node.appendChild(details);
}
