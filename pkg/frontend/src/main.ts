// Wiring: one WebSocket per connect, frames folded into the store, DOM
// updated after every frame. Reconnecting tears the old socket down and
// starts a fresh session (the server snapshot rebuilds the whole view).

import { ClientFrame, parseServerFrame } from "./protocol.js";
import { applyFrame, initialState, withConnection, ConsoleState } from "./store.js";
import { mount } from "./ui.js";

const params = new URLSearchParams(window.location.search);
const defaultUrl =
  params.get("gateway") ?? `ws://${window.location.hostname || "127.0.0.1"}:8765/session`;

let state: ConsoleState = initialState();
let socket: WebSocket | null = null;

const ui = mount(document.getElementById("app")!, defaultUrl, {
  onConnect(url) {
    connect(url);
  },
  onComposeStart() {
    send({ kind: "utterance_start" });
  },
  onSend(text) {
    send({ kind: "utterance_end", text });
  },
  onKill(pid) {
    send({ kind: "kill", pid });
  },
});

function setState(next: ConsoleState): void {
  state = next;
  ui.update(state);
}

function send(frame: ClientFrame): void {
  if (socket && socket.readyState === WebSocket.OPEN) {
    socket.send(JSON.stringify(frame));
  }
}

function connect(url: string): void {
  if (socket) {
    socket.onclose = null;
    socket.close();
  }
  setState(withConnection(initialState(), "connecting"));
  socket = new WebSocket(url);
  socket.onopen = () => setState(withConnection(state, "open"));
  socket.onmessage = (event) => setState(applyFrame(state, parseServerFrame(event.data)));
  socket.onclose = () => setState(withConnection(state, "closed"));
  socket.onerror = () => setState(withConnection(state, "closed"));
}

connect(defaultUrl);
