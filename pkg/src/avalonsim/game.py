"""Deterministic six-player Avalon rules engine.

Six players, four Good and two Evil, no special roles.  Each of the five
quests runs through a proposal, a turn-based discussion, a party vote, and
(on approval) a secret quest vote.  ``GameState`` is an immutable value:
``apply_event`` validates an event against the current phase and returns a
new state, so replaying the same event sequence always reproduces the same
states bit for bit.
"""

from __future__ import annotations

import dataclasses
import json
import random
from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum
from typing import Iterable, Iterator, Optional, Sequence, Union

N_PLAYERS = 6
N_EVIL = 2
PARTY_SCHEDULE = (2, 3, 4, 3, 4)
N_QUESTS = len(PARTY_SCHEDULE)
MAJORITY = 4  # approvals needed out of 6
MAX_REJECTIONS = 5
QUESTS_TO_WIN = 3

# Display names used by prompts and the play UI; seat i maps to names[i-1].
DEFAULT_PLAYER_NAMES = ("Sam", "Paul", "Luca", "Jane", "Kira", "Mia")


class Role(str, Enum):
    GOOD = "good"
    EVIL = "evil"


class Phase(str, Enum):
    PROPOSAL = "proposal"
    DISCUSSION = "discussion"
    PARTY_VOTE = "party_vote"
    QUEST_VOTE = "quest_vote"
    FINISHED = "finished"


class Outcome(IntEnum):
    """Quest result; integer values double as the codec's outcome codes."""

    UNPLAYED = 0
    FAIL = 1
    SUCCESS = 2


class RulesError(ValueError):
    """An event that is illegal in the current state."""


# ---------------------------------------------------------------------------
# Events


@dataclass(frozen=True)
class Propose:
    party: tuple[int, ...]


@dataclass(frozen=True)
class Say:
    speaker: int
    text: str


@dataclass(frozen=True)
class PartyVote:
    ballots: tuple[tuple[int, bool], ...]  # (player, approve), all six players


@dataclass(frozen=True)
class QuestVote:
    ballots: tuple[tuple[int, bool], ...]  # (player, success), party members only


Event = Union[Propose, Say, PartyVote, QuestVote]


# ---------------------------------------------------------------------------
# State


@dataclass(frozen=True)
class ChatEntry:
    speaker: int
    text: str
    quest: int
    turn: int


@dataclass(frozen=True)
class ProposalRecord:
    """Every proposal that reached a party vote (or is pending one)."""

    quest: int
    leader: int
    party: tuple[int, ...]
    votes: Optional[tuple[tuple[int, bool], ...]] = None
    approved: Optional[bool] = None


@dataclass(frozen=True)
class QuestRecord:
    index: int
    party: tuple[int, ...] = ()
    party_votes: tuple[tuple[int, bool], ...] = ()
    outcome: Outcome = Outcome.UNPLAYED
    fail_vote_count: int = 0


@dataclass(frozen=True)
class GameState:
    roles: tuple[Role, ...]  # indexed by player id - 1; hidden from agents
    phase: Phase = Phase.PROPOSAL
    leader: int = 1
    quest_index: int = 1
    consecutive_rejections: int = 0
    quests: tuple[QuestRecord, ...] = tuple(
        QuestRecord(index=i + 1) for i in range(N_QUESTS)
    )
    chat: tuple[ChatEntry, ...] = ()
    proposals: tuple[ProposalRecord, ...] = ()
    pending_party: Optional[tuple[int, ...]] = None
    speak_pos: int = 0  # 0 = leader pitch due; 1..5 = others; 6 = leader close
    revised: bool = False  # leader already used the one allowed revision
    awaiting_justification: bool = False
    rng_seed: int = 0
    players: tuple[int, ...] = tuple(range(1, N_PLAYERS + 1))

    def party_size(self) -> int:
        return PARTY_SCHEDULE[self.quest_index - 1]

    def role_of(self, player: int) -> Role:
        return self.roles[player - 1]

    def evil_players(self) -> tuple[int, ...]:
        return tuple(p for p in self.players if self.role_of(p) is Role.EVIL)

    def speak_order(self) -> tuple[int, ...]:
        """Discussion order: leader first, then clockwise, leader closes."""
        seats = [((self.leader - 1 + k) % N_PLAYERS) + 1 for k in range(N_PLAYERS)]
        return tuple(seats) + (self.leader,)

    def current_speaker(self) -> Optional[int]:
        if self.phase is not Phase.DISCUSSION:
            return None
        return self.speak_order()[self.speak_pos]

    def in_leader_close_slot(self) -> bool:
        return self.phase is Phase.DISCUSSION and self.speak_pos == N_PLAYERS


def new_game(seed: int, role_assignment: Optional[dict[int, Role]] = None) -> GameState:
    """Start a game; roles drawn from ``seed`` unless an assignment is given."""
    if role_assignment is not None:
        if sorted(role_assignment) != list(range(1, N_PLAYERS + 1)):
            raise RulesError("role assignment must cover players 1..6 exactly")
        evil = [p for p, r in role_assignment.items() if r is Role.EVIL]
        if len(evil) != N_EVIL:
            raise RulesError(f"role assignment needs exactly {N_EVIL} Evil, got {len(evil)}")
        roles = tuple(role_assignment[p] for p in range(1, N_PLAYERS + 1))
    else:
        rng = random.Random(seed)
        evil_seats = rng.sample(range(1, N_PLAYERS + 1), N_EVIL)
        roles = tuple(
            Role.EVIL if p in evil_seats else Role.GOOD for p in range(1, N_PLAYERS + 1)
        )
    return GameState(roles=roles, rng_seed=seed)


def winner(state: GameState) -> Optional[Role]:
    """Side that has won, or None while the game is unresolved."""
    successes = sum(1 for q in state.quests if q.outcome is Outcome.SUCCESS)
    fails = sum(1 for q in state.quests if q.outcome is Outcome.FAIL)
    if successes >= QUESTS_TO_WIN:
        return Role.GOOD
    if fails >= QUESTS_TO_WIN or state.consecutive_rejections >= MAX_REJECTIONS:
        return Role.EVIL
    return None


# ---------------------------------------------------------------------------
# Transitions


def _check_party(state: GameState, party: Sequence[int]) -> tuple[int, ...]:
    members = sorted(set(party))
    if len(members) != len(party):
        raise RulesError(f"party has duplicate members: {party}")
    if any(p < 1 or p > N_PLAYERS for p in members):
        raise RulesError(f"party member out of range: {party}")
    size = state.party_size()
    if len(members) != size:
        raise RulesError(f"quest {state.quest_index} needs a party of {size}, got {len(members)}")
    return tuple(members)


def _append_chat(state: GameState, speaker: int, text: str) -> tuple[ChatEntry, ...]:
    entry = ChatEntry(speaker=speaker, text=text, quest=state.quest_index, turn=len(state.chat))
    return state.chat + (entry,)


def _apply_propose(state: GameState, event: Propose) -> GameState:
    party = _check_party(state, event.party)
    if state.phase is Phase.PROPOSAL:
        record = ProposalRecord(quest=state.quest_index, leader=state.leader, party=party)
        return replace(
            state,
            phase=Phase.DISCUSSION,
            pending_party=party,
            proposals=state.proposals + (record,),
            speak_pos=0,
            revised=False,
            awaiting_justification=False,
        )
    if state.in_leader_close_slot() and not state.revised and not state.awaiting_justification:
        # The one allowed revision: replaces the pending proposal, then the
        # leader justifies it and the vote follows (no new discussion round).
        record = ProposalRecord(quest=state.quest_index, leader=state.leader, party=party)
        return replace(
            state,
            pending_party=party,
            proposals=state.proposals[:-1] + (record,),
            revised=True,
            awaiting_justification=True,
        )
    raise RulesError(f"Propose is illegal in phase {state.phase.value}")


def _apply_say(state: GameState, event: Say) -> GameState:
    if state.phase is not Phase.DISCUSSION:
        raise RulesError(f"Say is illegal in phase {state.phase.value}")
    expected = state.current_speaker()
    if event.speaker != expected:
        raise RulesError(f"it is player {expected}'s turn to speak, not {event.speaker}")
    chat = _append_chat(state, event.speaker, event.text)
    if state.awaiting_justification:
        # Post-revision justification closes the discussion.
        return replace(state, chat=chat, awaiting_justification=False, phase=Phase.PARTY_VOTE)
    if state.in_leader_close_slot():
        return replace(state, chat=chat, phase=Phase.PARTY_VOTE)
    return replace(state, chat=chat, speak_pos=state.speak_pos + 1)


def _apply_party_vote(state: GameState, event: PartyVote) -> GameState:
    if state.phase is not Phase.PARTY_VOTE:
        raise RulesError(f"PartyVote is illegal in phase {state.phase.value}")
    voters = sorted(p for p, _ in event.ballots)
    if voters != list(range(1, N_PLAYERS + 1)):
        raise RulesError("party vote needs exactly one ballot per player")
    ballots = tuple(sorted(event.ballots))
    approvals = sum(1 for _, approve in ballots if approve)
    approved = approvals >= MAJORITY
    record = replace(state.proposals[-1], votes=ballots, approved=approved)
    proposals = state.proposals[:-1] + (record,)
    if approved:
        return replace(
            state,
            phase=Phase.QUEST_VOTE,
            proposals=proposals,
            consecutive_rejections=0,
        )
    rejections = state.consecutive_rejections + 1
    next_leader = (state.leader % N_PLAYERS) + 1
    nxt = replace(
        state,
        phase=Phase.PROPOSAL,
        proposals=proposals,
        pending_party=None,
        consecutive_rejections=rejections,
        leader=next_leader,
    )
    if rejections >= MAX_REJECTIONS:
        return replace(nxt, phase=Phase.FINISHED)
    return nxt


def _apply_quest_vote(state: GameState, event: QuestVote) -> GameState:
    if state.phase is not Phase.QUEST_VOTE:
        raise RulesError(f"QuestVote is illegal in phase {state.phase.value}")
    party = state.pending_party or ()
    voters = sorted(p for p, _ in event.ballots)
    if voters != list(party):
        raise RulesError("quest ballots must come from exactly the approved party")
    fails = sum(1 for _, success in event.ballots if not success)
    outcome = Outcome.SUCCESS if fails == 0 else Outcome.FAIL
    quest = QuestRecord(
        index=state.quest_index,
        party=party,
        party_votes=state.proposals[-1].votes or (),
        outcome=outcome,
        fail_vote_count=fails,
    )
    quests = tuple(
        quest if q.index == state.quest_index else q for q in state.quests
    )
    nxt = replace(
        state,
        quests=quests,
        pending_party=None,
        leader=(state.leader % N_PLAYERS) + 1,
        quest_index=min(state.quest_index + 1, N_QUESTS),
    )
    if winner(nxt) is not None:
        return replace(nxt, phase=Phase.FINISHED)
    return replace(nxt, phase=Phase.PROPOSAL)


def apply_event(state: GameState, event: Event) -> GameState:
    """Apply one event, returning the successor state.

    Raises RulesError if the event is illegal for the current phase.
    """
    if state.phase is Phase.FINISHED:
        raise RulesError("game is finished")
    if isinstance(event, Propose):
        return _apply_propose(state, event)
    if isinstance(event, Say):
        return _apply_say(state, event)
    if isinstance(event, PartyVote):
        return _apply_party_vote(state, event)
    if isinstance(event, QuestVote):
        return _apply_quest_vote(state, event)
    raise RulesError(f"unknown event type: {event!r}")


# ---------------------------------------------------------------------------
# Game records (JSON Lines interchange format)


@dataclass
class GameRecord:
    """One finished (or aborted) game in the log interchange schema.

    The required fields are seed, players, roles, quests, chat, and winner;
    ``proposals`` (every party vote, including rejected ones), belief traces,
    and free-form ``meta`` ride along for metrics and replay.
    """

    seed: int
    players: list[int]
    roles: dict[int, str]
    quests: list[dict]
    chat: list[dict]
    winner: Optional[str]
    proposals: list[dict] = field(default_factory=list)
    beliefs: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def evil_players(self) -> set[int]:
        return {p for p, r in self.roles.items() if r == Role.EVIL.value}

    def to_json(self) -> str:
        payload = {
            "seed": self.seed,
            "players": self.players,
            "roles": {str(p): r for p, r in sorted(self.roles.items())},
            "quests": self.quests,
            "chat": self.chat,
            "winner": self.winner,
            "proposals": self.proposals,
            "beliefs": self.beliefs,
            "meta": self.meta,
        }
        return json.dumps(payload, separators=(",", ":"), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "GameRecord":
        raw = json.loads(line)
        return cls(
            seed=raw["seed"],
            players=list(raw["players"]),
            roles={int(p): r for p, r in raw["roles"].items()},
            quests=list(raw["quests"]),
            chat=list(raw["chat"]),
            winner=raw.get("winner"),
            proposals=list(raw.get("proposals", [])),
            beliefs=list(raw.get("beliefs", [])),
            meta=dict(raw.get("meta", {})),
        )


def record_from_state(state: GameState, seed: Optional[int] = None) -> GameRecord:
    """Snapshot a state into the log schema (roles included; logs are private)."""
    quests = [
        {
            "index": q.index,
            "party": list(q.party),
            "party_votes": {str(p): ("approve" if a else "reject") for p, a in q.party_votes},
            "outcome": q.outcome.name.lower(),
            "fail_vote_count": q.fail_vote_count,
        }
        for q in state.quests
    ]
    chat = [
        {"speaker": e.speaker, "text": e.text, "quest": e.quest, "turn": e.turn}
        for e in state.chat
    ]
    proposals = [
        {
            "quest": p.quest,
            "leader": p.leader,
            "party": list(p.party),
            "votes": None
            if p.votes is None
            else {str(pl): ("approve" if a else "reject") for pl, a in p.votes},
            "approved": p.approved,
        }
        for p in state.proposals
    ]
    side = winner(state)
    return GameRecord(
        seed=state.rng_seed if seed is None else seed,
        players=list(state.players),
        roles={p: state.role_of(p).value for p in state.players},
        quests=quests,
        chat=chat,
        winner=None if side is None else side.value,
        proposals=proposals,
    )


def write_records(path, records: Iterable[GameRecord], header: Optional[dict] = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if header is not None:
            fh.write(json.dumps({"type": "header", **header}, sort_keys=True) + "\n")
        for rec in records:
            fh.write(rec.to_json() + "\n")


def read_records(path, on_error: str = "raise") -> Iterator[GameRecord]:
    """Yield GameRecords from a JSON Lines file, skipping any header line.

    on_error="count" skips malformed lines and reports the tally via the
    generator's StopIteration value (callers using it get it from read_log).
    """
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
                if isinstance(raw, dict) and raw.get("type") == "header":
                    continue
                yield GameRecord.from_json(line)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                if on_error == "raise":
                    raise ValueError(f"{path}:{lineno}: malformed game record: {exc}") from exc


def read_log(path) -> tuple[list[GameRecord], int]:
    """Read a log leniently; returns (records, number of skipped lines)."""
    records: list[GameRecord] = []
    skipped = 0
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
                if isinstance(raw, dict) and raw.get("type") == "header":
                    continue
                records.append(GameRecord.from_json(line))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                skipped += 1
    return records, skipped
