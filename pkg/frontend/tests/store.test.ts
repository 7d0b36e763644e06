import { describe, expect, it } from "vitest";

import { Frame, StatePayload } from "../src/protocol";
import { applyFrame, newClientState, submitAction, toggleDraftSeat } from "../src/store";
import { renderView } from "../src/view";

const NAMES = ["Sam", "Paul", "Luca", "Jane", "Kira", "Mia"];

function statePayload(overrides: Partial<StatePayload> = {}): StatePayload {
  return {
    schema_version: 1,
    phase: "proposal",
    round: 1,
    party_size: 2,
    leader: 1,
    active_speaker: null,
    proposed_party: null,
    rejection_tracker: 0,
    quest_coins: [null, null, null, null, null],
    seats: NAMES.map((name, i) => ({ seat: i + 1, name })),
    your_seat: 2,
    your_role: "good",
    winner: null,
    ...overrides,
  };
}

function frame(type: string, seq: number, payload: Record<string, unknown> = {}): Frame {
  return { type, seq, payload };
}

function stateFrame(seq: number, overrides: Partial<StatePayload> = {}): Frame {
  return frame("state", seq, statePayload(overrides) as any);
}

describe("applyFrame", () => {
  it("drops frames at or below the last applied sequence number", () => {
    const st = newClientState();
    expect(applyFrame(st, stateFrame(1))).toBe(true);
    expect(applyFrame(st, frame("chat", 2, { seat: 1, name: "Sam", text: "hi" }))).toBe(true);
    expect(applyFrame(st, frame("chat", 2, { seat: 1, name: "Sam", text: "hi" }))).toBe(false);
    expect(st.chat.length).toBe(1);
    expect(st.lastSeq).toBe(2);
  });

  it("converges to the same view when the server replays the whole stream", () => {
    const stream = [
      stateFrame(1),
      frame("chat", 2, { seat: 3, name: "Luca", text: "opening read" }),
      stateFrame(3, { phase: "party_vote", proposed_party: [1, 4] }),
      frame("party_vote_request", 4, { party: [1, 4] }),
    ];
    const direct = newClientState();
    for (const f of stream) applyFrame(direct, f);

    // reconnecting client saw the first two frames, then gets everything again
    const resumed = newClientState();
    applyFrame(resumed, stream[0]);
    applyFrame(resumed, stream[1]);
    for (const f of stream) applyFrame(resumed, f);

    expect(resumed).toEqual(direct);
    expect(renderView(resumed)).toBe(renderView(direct));
  });

  it("records the seat from the join frame and checks its schema version", () => {
    const st = newClientState();
    applyFrame(st, { type: "join", seq: 0, payload: { seat: 5, schema_version: 1, names: NAMES } });
    expect(st.seat).toBe(5);
    expect(st.schemaError).toBeNull();

    const bad = newClientState();
    applyFrame(bad, { type: "join", seq: 0, payload: { seat: 5, schema_version: 2, names: NAMES } });
    expect(bad.schemaError).not.toBeNull();
  });

  it("retires a stale request once the state moves past it", () => {
    const st = newClientState();
    applyFrame(st, stateFrame(1, { phase: "party_vote", proposed_party: [1, 2] }));
    applyFrame(st, frame("party_vote_request", 2, { party: [1, 2] }));
    expect(st.awaiting).toBe("party_ballot");
    applyFrame(st, stateFrame(3, { phase: "discussion", active_speaker: 1 }));
    expect(st.awaiting).toBeNull();
    expect(st.pending).toBe(false);
  });

  it("keeps going on unknown frame types", () => {
    const st = newClientState();
    applyFrame(st, stateFrame(1));
    expect(applyFrame(st, frame("telemetry", 2, { blob: 1 }))).toBe(false);
    expect(st.state).not.toBeNull();
  });
});

describe("submitAction", () => {
  it("blocks actions the server has not asked for", () => {
    const st = newClientState();
    applyFrame(st, stateFrame(1));
    expect(submitAction(st, { type: "party_ballot", approve: true })).toBeNull();
    expect(submitAction(st, { type: "chat", text: "hello" })).toBeNull();
  });

  it("sends exactly one event per ballot, swallowing the double-click", () => {
    const st = newClientState();
    applyFrame(st, stateFrame(1, { phase: "party_vote", proposed_party: [1, 2] }));
    applyFrame(st, frame("party_vote_request", 2, { party: [1, 2] }));
    const first = submitAction(st, { type: "party_ballot", approve: true });
    expect(first).toEqual({ type: "party_ballot", approve: true });
    const second = submitAction(st, { type: "party_ballot", approve: true });
    expect(second).toBeNull();
    expect(st.pending).toBe(true);
  });

  it("re-enables controls once the ballot is acknowledged", () => {
    const st = newClientState();
    applyFrame(st, stateFrame(1, { phase: "party_vote", proposed_party: [1, 2] }));
    applyFrame(st, frame("party_vote_request", 2, { party: [1, 2] }));
    submitAction(st, { type: "party_ballot", approve: false });
    applyFrame(st, frame("party_ballot", 3, { accepted: true }));
    expect(st.pending).toBe(false);
    expect(st.awaiting).toBeNull();
  });

  it("only accepts a proposal of exactly the required size", () => {
    const st = newClientState();
    applyFrame(st, stateFrame(1, { your_seat: 1, leader: 1, party_size: 2 }));
    applyFrame(st, frame("propose", 2, { party_size: 2, round: 1 }));
    expect(submitAction(st, { type: "propose", party: [1] })).toBeNull();
    expect(submitAction(st, { type: "propose", party: [1, 4] })).toEqual({
      type: "propose",
      party: [1, 4],
    });
  });

  it("keeps the drafted party sorted and toggles seats in and out", () => {
    const st = newClientState();
    applyFrame(st, stateFrame(1, { your_seat: 1, leader: 1, party_size: 2 }));
    applyFrame(st, frame("propose", 2, { party_size: 2, round: 1 }));
    toggleDraftSeat(st, 4);
    toggleDraftSeat(st, 1);
    toggleDraftSeat(st, 4); // deselect
    toggleDraftSeat(st, 5);
    expect(st.draftParty).toEqual([1, 5]);
    expect(submitAction(st, { type: "propose", party: [...st.draftParty] })).toEqual({
      type: "propose",
      party: [1, 5],
    });
  });

  it("lets the seat speak only on its turn and never sends blank chat", () => {
    const st = newClientState();
    applyFrame(st, stateFrame(1, { phase: "discussion", active_speaker: 2 }));
    applyFrame(st, frame("your_turn", 2, { kind: "speak" }));
    expect(submitAction(st, { type: "chat", text: "   " })).toBeNull();
    expect(submitAction(st, { type: "chat", text: "watch seat five" })).toEqual({
      type: "chat",
      text: "watch seat five",
    });
  });

  it("clears pending on a server error so the user can retry", () => {
    const st = newClientState();
    applyFrame(st, stateFrame(1, { phase: "party_vote", proposed_party: [1, 2] }));
    applyFrame(st, frame("party_vote_request", 2, { party: [1, 2] }));
    submitAction(st, { type: "party_ballot", approve: true });
    applyFrame(st, frame("error", 3, { code: "not_your_turn", detail: "ballot already cast" }));
    expect(st.toast).toContain("ballot already cast");
    expect(st.pending).toBe(false);
  });

  it("goes quiet after the game is decided", () => {
    const st = newClientState();
    applyFrame(st, stateFrame(1, { phase: "party_vote", proposed_party: [1, 2] }));
    applyFrame(st, frame("party_vote_request", 2, { party: [1, 2] }));
    applyFrame(st, frame("result", 3, { winner: "good" }));
    expect(submitAction(st, { type: "party_ballot", approve: true })).toBeNull();
  });
});
