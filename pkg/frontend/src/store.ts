// Client-side session state. The server is authoritative: this store only
// applies inbound frames in sequence order and gates what the user may send.

import {
  ChatPayload,
  ClientEvent,
  Frame,
  JoinPayload,
  SCHEMA_VERSION,
  StatePayload,
} from "./protocol";

export type AwaitedAction = "propose" | "chat" | "party_ballot" | "quest_ballot";

export interface ClientState {
  seat: number | null;
  lastSeq: number;
  state: StatePayload | null; // last applied state payload
  chat: ChatPayload[];
  awaiting: AwaitedAction | null; // what the server asked this seat for
  pending: boolean; // an action is on the wire, controls stay disabled
  draftText: string;
  draftParty: number[];
  toast: string | null; // last server error, non-blocking
  schemaError: string | null; // version mismatch, blocks everything
  result: string | null;
  connected: boolean;
}

export function newClientState(): ClientState {
  return {
    seat: null,
    lastSeq: 0,
    state: null,
    chat: [],
    awaiting: null,
    pending: false,
    draftText: "",
    draftParty: [],
    toast: null,
    schemaError: null,
    result: null,
    connected: false,
  };
}

function requestStillLive(st: ClientState): boolean {
  const s = st.state;
  if (s === null) return false;
  switch (st.awaiting) {
    case "propose":
      return s.phase === "proposal" && s.leader === s.your_seat;
    case "chat":
      return s.phase === "discussion" && s.active_speaker === s.your_seat;
    case "party_ballot":
      return s.phase === "party_vote";
    case "quest_ballot":
      return (
        s.phase === "quest_vote" &&
        (s.proposed_party ?? []).includes(s.your_seat)
      );
    default:
      return false;
  }
}

/** Apply one inbound frame. Frames at or below lastSeq are replays from a
 * reconnect and are dropped, so feeding the same stream twice converges to
 * the same state. Returns true when the frame changed anything. */
export function applyFrame(st: ClientState, frame: Frame): boolean {
  if (frame.type === "join") {
    const join = frame.payload as unknown as JoinPayload;
    if (join.schema_version !== SCHEMA_VERSION) {
      st.schemaError = `server speaks schema v${join.schema_version}, client expects v${SCHEMA_VERSION}`;
      return true;
    }
    st.seat = join.seat;
    return true;
  }
  if (frame.seq <= st.lastSeq) return false;
  st.lastSeq = frame.seq;
  switch (frame.type) {
    case "state": {
      const payload = frame.payload as unknown as StatePayload;
      if (payload.schema_version !== SCHEMA_VERSION) {
        st.schemaError = `server speaks schema v${payload.schema_version}, client expects v${SCHEMA_VERSION}`;
        return true;
      }
      st.state = payload;
      st.seat = payload.your_seat;
      if (payload.winner) st.result = payload.winner;
      // a state that no longer matches the outstanding request retires it
      if (st.awaiting !== null && !requestStillLive(st)) {
        st.awaiting = null;
        st.pending = false;
      }
      return true;
    }
    case "chat":
      st.chat.push(frame.payload as unknown as ChatPayload);
      return true;
    case "propose":
      st.awaiting = "propose";
      st.pending = false;
      st.draftParty = [];
      return true;
    case "your_turn":
      st.awaiting = "chat";
      st.pending = false;
      return true;
    case "party_vote_request":
      st.awaiting = "party_ballot";
      st.pending = false;
      return true;
    case "quest_vote_request":
      st.awaiting = "quest_ballot";
      st.pending = false;
      return true;
    case "party_ballot":
    case "quest_ballot":
      // our ballot was accepted; the phase only moves once everyone voted
      st.awaiting = null;
      st.pending = false;
      return true;
    case "result":
      st.result = (frame.payload.winner as string | null) ?? null;
      return true;
    case "error":
      st.toast = String(frame.payload.detail ?? frame.payload.code ?? "error");
      st.pending = false;
      return true;
    default:
      return false; // unknown frame types are ignored, not fatal
  }
}

export type Action =
  | { type: "propose"; party: number[] }
  | { type: "chat"; text: string }
  | { type: "party_ballot"; approve: boolean }
  | { type: "quest_ballot"; success: boolean };

/** Gate one user action. Returns the wire event to send, or null when the
 * click must be swallowed: not our turn for that action, a previous send is
 * still unacknowledged (double-click debounce), or the session is blocked. */
export function submitAction(st: ClientState, action: Action): ClientEvent | null {
  if (st.schemaError !== null || st.result !== null) return null;
  if (st.pending) return null;
  if (st.awaiting !== actionKind(action.type)) return null;
  if (action.type === "propose") {
    const size = st.state?.party_size ?? null;
    if (size === null || action.party.length !== size) return null;
  }
  if (action.type === "chat" && action.text.trim() === "") return null;
  st.pending = true;
  st.toast = null;
  return action;
}

function actionKind(type: Action["type"]): AwaitedAction {
  return type === "chat" ? "chat" : type;
}

export function toggleDraftSeat(st: ClientState, seat: number): void {
  const at = st.draftParty.indexOf(seat);
  if (at >= 0) st.draftParty.splice(at, 1);
  else st.draftParty.push(seat);
  st.draftParty.sort((a, b) => a - b);
}
