// Browser entry point: wires the chat state machine to a WebSocket, the DOM,
// and the service's schema endpoints. Reconnects with a capped backoff.

import { ChatController } from "./chat-core.js";
import { QueryFrame } from "./protocol.js";
import { ViewElements, render } from "./view.js";

function byId<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node as T;
}

const elements: ViewElements = {
  messages: byId("messages"),
  timeline: byId("timeline"),
  results: byId("results"),
  trace: byId("trace"),
  banner: byId("banner"),
  input: byId<HTMLInputElement>("input"),
  send: byId<HTMLButtonElement>("send"),
};

let socket: WebSocket | null = null;
let preferredColumns: string[] = [];

const controller = new ChatController(
  {
    send(frame: QueryFrame) {
      socket?.send(JSON.stringify(frame));
    },
  },
  () => render(controller.state, elements, { preferredColumns }),
);

function connect(attempt = 0): void {
  const scheme = location.protocol === "https:" ? "wss" : "ws";
  socket = new WebSocket(`${scheme}://${location.host}/ws/chat`);
  socket.onopen = () => controller.setConnected(true);
  socket.onmessage = (event) => controller.handleRaw(String(event.data));
  socket.onclose = () => {
    controller.setConnected(false);
    setTimeout(() => connect(attempt + 1), Math.min(1000 * 2 ** attempt, 10_000));
  };
  socket.onerror = () => socket?.close();
}

async function loadSchemas(): Promise<void> {
  // schema parameter order drives the results-table column order
  try {
    const categories: { categories: string[] } =
      await (await fetch("/api/categories")).json();
    const columns: string[] = [];
    for (const name of categories.categories) {
      const schema: { parameters: string[] } =
        await (await fetch(`/api/schema/${encodeURIComponent(name)}`)).json();
      for (const parameter of schema.parameters) {
        if (!columns.includes(parameter)) columns.push(parameter);
      }
    }
    preferredColumns = columns;
  } catch (error) {
    console.warn("schema prefetch failed", error);
  }
}

function submit(): void {
  if (controller.submit(elements.input.value)) {
    elements.input.value = "";
  }
}

elements.send.addEventListener("click", submit);
elements.input.addEventListener("keydown", (event) => {
  if ((event as KeyboardEvent).key === "Enter") {
    event.preventDefault();
    submit();
  }
});

render(controller.state, elements, { preferredColumns });
void loadSchemas();
connect();
