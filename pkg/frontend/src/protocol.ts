// Wire protocol mirror of the play server. Frames arrive as
// {type, seq, payload}; seq is per-seat and gap-free, join is seq 0.

export const SCHEMA_VERSION = 1;

export type Phase =
  | "proposal"
  | "discussion"
  | "party_vote"
  | "quest_vote"
  | "finished";

export interface SeatInfo {
  seat: number;
  name: string;
}

export interface StatePayload {
  schema_version: number;
  phase: Phase;
  round: number;
  party_size: number | null;
  leader: number;
  active_speaker: number | null;
  proposed_party: number[] | null;
  rejection_tracker: number;
  quest_coins: ("blue" | "red" | null)[];
  seats: SeatInfo[];
  your_seat: number;
  your_role: "good" | "evil";
  winner: "good" | "evil" | null;
  evil_ids?: number[]; // present only on Evil seats
}

export interface JoinPayload {
  seat: number;
  schema_version: number;
  names: string[];
}

export interface ChatPayload {
  seat: number;
  name: string;
  text: string;
}

export interface ErrorPayload {
  code: string;
  detail: string;
}

export interface Frame {
  type: string;
  seq: number;
  payload: Record<string, unknown>;
}

// Everything a client may put on the wire.
export type ClientEvent =
  | { type: "join"; last_seq: number }
  | { type: "ack"; seq: number }
  | { type: "propose"; party: number[] }
  | { type: "chat"; text: string }
  | { type: "party_ballot"; approve: boolean }
  | { type: "quest_ballot"; success: boolean };

export function parseFrame(raw: string): Frame | null {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof data !== "object" || data === null) return null;
  const obj = data as Record<string, unknown>;
  if (typeof obj.type !== "string" || typeof obj.seq !== "number") return null;
  const payload =
    typeof obj.payload === "object" && obj.payload !== null
      ? (obj.payload as Record<string, unknown>)
      : {};
  return { type: obj.type, seq: obj.seq, payload };
}
