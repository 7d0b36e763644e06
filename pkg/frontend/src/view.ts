// Rendering is a pure function of the store: same state, same markup.
// No game logic lives here, only a faithful picture of the last payload.

import { ClientState } from "./store";
import { StatePayload } from "./protocol";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

const PHASE_LABELS: Record<string, string> = {
  proposal: "Party proposal",
  discussion: "Discussion",
  party_vote: "Party vote",
  quest_vote: "Quest vote",
  finished: "Game over",
};

export function renderView(st: ClientState): string {
  if (st.schemaError !== null) {
    // a version mismatch means nothing else can be trusted, so block the UI
    return `<div class="banner blocking">${escapeHtml(st.schemaError)}</div>`;
  }
  const s = st.state;
  if (s === null) {
    return `<div class="lobby">${st.connected ? "Waiting for the game state..." : "Connecting..."}</div>`;
  }
  const parts = [
    renderHeader(s, st.connected),
    renderCoins(s),
    renderAvatars(s),
    renderRoleCard(s),
    renderChat(st),
    renderControls(st, s),
  ];
  if (st.result !== null) {
    parts.push(`<div class="banner result">${escapeHtml(st.result)} wins</div>`);
  }
  if (st.toast !== null) {
    parts.push(`<div class="toast">${escapeHtml(st.toast)}</div>`);
  }
  return parts.join("\n");
}

function renderHeader(s: StatePayload, connected: boolean): string {
  const pips = [];
  for (let i = 0; i < 5; i++) {
    pips.push(`<span class="pip${i < s.rejection_tracker ? " lit" : ""}"></span>`);
  }
  return (
    `<header><span class="round">Quest ${s.round}</span>` +
    `<span class="phase">${PHASE_LABELS[s.phase] ?? s.phase}</span>` +
    `<span class="tracker" title="consecutive rejected parties">${pips.join("")}</span>` +
    `<span class="link ${connected ? "up" : "down"}">${connected ? "online" : "offline"}</span></header>`
  );
}

function renderCoins(s: StatePayload): string {
  const coins = s.quest_coins
    .map((c) => `<span class="coin ${c ?? "empty"}"></span>`)
    .join("");
  return `<div class="coins">${coins}</div>`;
}

function renderAvatars(s: StatePayload): string {
  const party = new Set(s.proposed_party ?? []);
  const evil = new Set(s.evil_ids ?? []); // only ever present on Evil seats
  const cells = s.seats.map(({ seat, name }) => {
    const classes = ["avatar"];
    if (seat === s.your_seat) classes.push("you");
    if (evil.has(seat)) classes.push("evil-ring");
    const badges = [];
    if (seat === s.leader) badges.push(`<span class="badge crown" title="party leader"></span>`);
    if (party.has(seat)) badges.push(`<span class="badge shield" title="in the proposed party"></span>`);
    if (seat === s.active_speaker) badges.push(`<span class="badge jester" title="speaking"></span>`);
    return (
      `<div class="${classes.join(" ")}" data-seat="${seat}">` +
      `<div class="face"></div>${badges.join("")}` +
      `<div class="name">${escapeHtml(name)}</div></div>`
    );
  });
  return `<div class="table">${cells.join("")}</div>`;
}

function renderRoleCard(s: StatePayload): string {
  return `<div class="role-card ${s.your_role}">You are ${s.your_role === "evil" ? "Evil" : "Good"}</div>`;
}

function renderChat(st: ClientState): string {
  const lines = st.chat
    .map(
      (m) =>
        `<div class="line"><span class="who">${escapeHtml(m.name)}</span> ${escapeHtml(m.text)}</div>`
    )
    .join("");
  return `<div class="chat" id="chat">${lines}</div>`;
}

function renderControls(st: ClientState, s: StatePayload): string {
  if (s.phase === "finished") return "";
  const disabled = st.pending ? " disabled" : "";
  switch (st.awaiting) {
    case "propose": {
      const size = s.party_size ?? 0;
      const boxes = s.seats
        .map(({ seat, name }) => {
          const on = st.draftParty.includes(seat);
          return (
            `<label><input type="checkbox" data-action="toggle-seat" data-seat="${seat}"` +
            `${on ? " checked" : ""}${disabled}> ${escapeHtml(name)}</label>`
          );
        })
        .join("");
      const ready = st.draftParty.length === size && !st.pending;
      return (
        `<div class="controls propose"><p>Pick ${size} players for the quest.</p>${boxes}` +
        `<button data-action="propose"${ready ? "" : " disabled"}>Propose party</button></div>`
      );
    }
    case "chat":
      return (
        `<div class="controls speak"><input type="text" id="draft" data-action="draft" ` +
        `value="${escapeHtml(st.draftText)}" placeholder="Say something..."${disabled}>` +
        `<button data-action="say"${disabled}>Send</button></div>`
      );
    case "party_ballot":
      return (
        `<div class="controls ballot"><p>Approve this party?</p>` +
        `<button data-action="approve"${disabled}>Approve</button>` +
        `<button data-action="reject"${disabled}>Reject</button></div>`
      );
    case "quest_ballot":
      return (
        `<div class="controls ballot"><p>You are on the quest.</p>` +
        `<button data-action="succeed"${disabled}>Success</button>` +
        `<button data-action="fail"${disabled}>Fail</button></div>`
      );
    default:
      return `<div class="controls idle">Waiting for the other players...</div>`;
  }
}
