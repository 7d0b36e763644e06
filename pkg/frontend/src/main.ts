// Entry point: read session and token from the query string, connect, and
// keep the DOM in sync with the store. All clicks funnel through
// submitAction so gating and debounce live in one place.

import { Connection } from "./socket";
import {
  Action,
  ClientState,
  newClientState,
  submitAction,
  toggleDraftSeat,
} from "./store";
import { renderView } from "./view";

const app = document.getElementById("app")!;
const st: ClientState = newClientState();
let conn: Connection | null = null;

function rerender(): void {
  app.innerHTML = renderView(st);
  const chat = document.getElementById("chat");
  if (chat !== null) chat.scrollTop = chat.scrollHeight;
}

function trySend(action: Action): void {
  const event = submitAction(st, action);
  if (event !== null && conn !== null) {
    conn.send(event);
    if (action.type === "chat") st.draftText = "";
  }
  rerender();
}

app.addEventListener("click", (ev) => {
  const target = (ev.target as HTMLElement).closest("[data-action]");
  if (target === null) return;
  const action = target.getAttribute("data-action");
  switch (action) {
    case "toggle-seat":
      toggleDraftSeat(st, Number(target.getAttribute("data-seat")));
      rerender();
      break;
    case "propose":
      trySend({ type: "propose", party: [...st.draftParty] });
      break;
    case "say":
      trySend({ type: "chat", text: st.draftText });
      break;
    case "approve":
      trySend({ type: "party_ballot", approve: true });
      break;
    case "reject":
      trySend({ type: "party_ballot", approve: false });
      break;
    case "succeed":
      trySend({ type: "quest_ballot", success: true });
      break;
    case "fail":
      trySend({ type: "quest_ballot", success: false });
      break;
  }
});

// draft text stays in the input until submit; no rerender per keystroke
app.addEventListener("input", (ev) => {
  const target = ev.target as HTMLInputElement;
  if (target.getAttribute("data-action") === "draft") {
    st.draftText = target.value;
  }
});

app.addEventListener("keydown", (ev) => {
  const target = ev.target as HTMLElement;
  if (ev.key === "Enter" && target.getAttribute("data-action") === "draft") {
    trySend({ type: "chat", text: st.draftText });
  }
});

function connect(sessionId: string, token: string): void {
  const scheme = location.protocol === "https:" ? "wss" : "ws";
  conn = new Connection(
    `${scheme}://${location.host}/ws/${sessionId}/${token}`,
    st,
    rerender
  );
  conn.open();
}

async function createSoloSession(): Promise<void> {
  // one human seat, five default agents; handy for trying the client out
  const seats: { kind: string; policy?: string }[] = [{ kind: "human" }];
  for (let i = 0; i < 5; i++) seats.push({ kind: "agent", policy: "random" });
  const response = await fetch("/sessions", {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify({ seats, seed: Date.now() % 100000 }),
  });
  const created = await response.json();
  if (created.error) {
    app.innerHTML = `<div class="banner blocking">${created.error}</div>`;
    return;
  }
  const token = created.join_tokens["1"];
  location.search = `?session=${created.session_id}&token=${token}`;
}

const params = new URLSearchParams(location.search);
const sessionId = params.get("session");
const token = params.get("token");
if (sessionId !== null && token !== null) {
  connect(sessionId, token);
  rerender();
} else {
  app.innerHTML = `
    <div class="lobby">
      <h1>Resistance table</h1>
      <p>Join with a session id and seat token, or start a solo table.</p>
      <input type="text" id="session-id" placeholder="session id">
      <input type="text" id="seat-token" placeholder="seat token">
      <button id="join">Join</button>
      <button id="solo">New solo session</button>
    </div>`;
  document.getElementById("join")!.addEventListener("click", () => {
    const sid = (document.getElementById("session-id") as HTMLInputElement).value.trim();
    const tok = (document.getElementById("seat-token") as HTMLInputElement).value.trim();
    if (sid && tok) location.search = `?session=${sid}&token=${tok}`;
  });
  document.getElementById("solo")!.addEventListener("click", () => {
    void createSoloSession();
  });
}
