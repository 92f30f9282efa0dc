// DOM rendering. One static skeleton, updated in place from ConsoleState;
// all interaction flows out through UiHandlers.

import { ConsoleState, pendingTools, transcript } from "./store.js";
import { ProcessRow } from "./protocol.js";

export interface UiHandlers {
  onComposeStart(): void;
  onSend(text: string): void;
  onKill(pid: number): void;
  onConnect(url: string): void;
}

export interface ConsoleUi {
  update(state: ConsoleState): void;
}

const STATE_COLORS: Record<string, string> = {
  idle: "#3a7",
  generating: "#07c",
  emitting: "#d80",
  listening: "#c3c",
};

export function mount(root: HTMLElement, defaultUrl: string, handlers: UiHandlers): ConsoleUi {
  root.innerHTML = `
    <header class="bar">
      <input id="gateway-url" type="text" spellcheck="false" />
      <button id="connect">connect</button>
      <span id="connection" class="badge"></span>
      <span id="state-lamp" class="badge"></span>
      <span id="clock" class="mono"></span>
    </header>
    <main class="panels">
      <section class="panel transcript-panel">
        <h2>transcript
          <label class="toggle"><input id="show-notifications" type="checkbox" />notifications</label>
        </h2>
        <ol id="transcript"></ol>
        <p id="speech" class="speech mono" hidden></p>
        <form id="composer">
          <input id="composer-text" type="text" autocomplete="off"
                 placeholder="type to interrupt, enter to send" />
          <button id="send" type="submit">send</button>
        </form>
      </section>
      <section class="panel">
        <h2>processes</h2>
        <ul id="process-tree"></ul>
        <h2>pending tools</h2>
        <ul id="pending-tools"></ul>
      </section>
      <section class="panel">
        <h2>ledger
          <label class="toggle"><input id="show-ledger" type="checkbox" />raw</label>
        </h2>
        <pre id="ledger" class="mono" hidden></pre>
        <ul id="errors"></ul>
      </section>
    </main>`;

  const urlInput = root.querySelector<HTMLInputElement>("#gateway-url")!;
  const connectButton = root.querySelector<HTMLButtonElement>("#connect")!;
  const connectionBadge = root.querySelector<HTMLElement>("#connection")!;
  const stateLamp = root.querySelector<HTMLElement>("#state-lamp")!;
  const clockLabel = root.querySelector<HTMLElement>("#clock")!;
  const transcriptList = root.querySelector<HTMLOListElement>("#transcript")!;
  const speechLine = root.querySelector<HTMLElement>("#speech")!;
  const composer = root.querySelector<HTMLFormElement>("#composer")!;
  const composerText = root.querySelector<HTMLInputElement>("#composer-text")!;
  const sendButton = root.querySelector<HTMLButtonElement>("#send")!;
  const notificationsToggle = root.querySelector<HTMLInputElement>("#show-notifications")!;
  const ledgerToggle = root.querySelector<HTMLInputElement>("#show-ledger")!;
  const ledgerPre = root.querySelector<HTMLPreElement>("#ledger")!;
  const processList = root.querySelector<HTMLUListElement>("#process-tree")!;
  const pendingList = root.querySelector<HTMLUListElement>("#pending-tools")!;
  const errorList = root.querySelector<HTMLUListElement>("#errors")!;

  urlInput.value = defaultUrl;
  let lastState: ConsoleState | null = null;
  let composing = false;

  connectButton.addEventListener("click", (event) => {
    event.preventDefault();
    handlers.onConnect(urlInput.value.trim());
  });

  composerText.addEventListener("input", () => {
    // The first keystroke is the "user starts speaking" signal.
    if (!composing && composerText.value.length > 0) {
      composing = true;
      handlers.onComposeStart();
    }
  });

  composer.addEventListener("submit", (event) => {
    event.preventDefault();
    const text = composerText.value.trim();
    if (!text) {
      return; // empty send is ignored
    }
    composing = false;
    composerText.value = "";
    handlers.onSend(text);
  });

  notificationsToggle.addEventListener("change", () => rerender());
  ledgerToggle.addEventListener("change", () => rerender());

  function rerender(): void {
    if (lastState) {
      update(lastState);
    }
  }

  function update(state: ConsoleState): void {
    lastState = state;
    connectionBadge.textContent = state.connection;
    connectionBadge.className = `badge conn-${state.connection}`;
    stateLamp.textContent = state.fsmState;
    stateLamp.style.background = STATE_COLORS[state.fsmState] ?? "#888";
    clockLabel.textContent = `t=${state.clockMs}ms`;
    sendButton.disabled = state.connection !== "open";

    transcriptList.replaceChildren(
      ...transcript(state, { notifications: notificationsToggle.checked }).map((entry) => {
        const item = document.createElement("li");
        item.className = `entry entry-${entry.speaker}${entry.interrupted ? " interrupted" : ""}`;
        const speaker = document.createElement("span");
        speaker.className = "speaker";
        speaker.textContent = entry.speaker;
        const text = document.createElement("span");
        text.textContent = entry.text;
        item.append(speaker, text);
        return item;
      }),
    );

    speechLine.hidden = !state.emission;
    speechLine.textContent = state.emission ? `speaking: ${state.emission}` : "";

    processList.replaceChildren(...state.processes.map((row) => processItem(row)));
    pendingList.replaceChildren(
      ...pendingTools(state).map((tool) => {
        const item = document.createElement("li");
        item.className = "mono";
        item.textContent = `${tool.name} ${tool.requestId}`;
        return item;
      }),
    );

    ledgerPre.hidden = !ledgerToggle.checked;
    if (ledgerToggle.checked) {
      ledgerPre.textContent = JSON.stringify(state.messages, null, 2);
    }

    errorList.replaceChildren(
      ...state.errors.slice(-3).map((detail) => {
        const item = document.createElement("li");
        item.className = "toast";
        item.textContent = detail;
        return item;
      }),
    );
  }

  function processItem(row: ProcessRow): HTMLLIElement {
    const item = document.createElement("li");
    item.className = `proc proc-${row.status}`;
    const label = document.createElement("span");
    label.className = "mono";
    const parent = row.parent === null ? "root" : `parent ${row.parent}`;
    label.textContent = `pid ${row.pid} (${parent}) ${row.status}`;
    item.append(label);
    if (row.status === "running" && row.pid !== 0) {
      const kill = document.createElement("button");
      kill.textContent = "kill";
      kill.addEventListener("click", () => handlers.onKill(row.pid));
      item.append(kill);
    }
    return item;
  }

  return { update };
}
