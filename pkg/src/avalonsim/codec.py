"""Integer codecs for observable game state.

A game observation is 15 small integers: for each of the five quests, a
party code, a party-vote code, and an outcome code.  Code 0 always means
"not seen yet"; real values start at 1.

Party codes enumerate the size-s subsets of the six seats in lexicographic
order ({1,2} -> 1 ... {5,6} -> 15 for size 2).  Party-vote codes enumerate
the possible approver sets of an approved party: all 4-subsets first (codes
1..15, lex), then 5-subsets (16..21), then the full table (22).  Outcome
codes reuse the Outcome enum values (1 fail, 2 success).

Seat relabelings (the ego transform and circular augmentation) are pure
rotations of the seat circle, applied through precomputed lookup tables.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from typing import FrozenSet, Iterable, Optional, Sequence

import numpy as np

from .game import N_PLAYERS, N_QUESTS, PARTY_SCHEDULE, GameRecord, GameState, Outcome

# Bump if the enumeration order of vote compositions ever changes; trained
# model weights record this so stale models are rejected at load time.
VOTE_ORDERING_TAG = "size-then-lex-v1"

SEATS = tuple(range(1, N_PLAYERS + 1))

# party sizes with ballots that can approve a party (majority of 6 is 4)
_APPROVER_SIZES = (4, 5, 6)


def _subsets(size: int) -> list[tuple[int, ...]]:
    return list(itertools.combinations(SEATS, size))


_PARTY_CODES: dict[int, dict[tuple[int, ...], int]] = {}
_PARTY_SETS: dict[int, list[tuple[int, ...]]] = {}
for _size in sorted(set(PARTY_SCHEDULE)):
    combos = _subsets(_size)
    _PARTY_SETS[_size] = combos
    _PARTY_CODES[_size] = {c: i + 1 for i, c in enumerate(combos)}

_VOTE_SETS: list[tuple[int, ...]] = []
for _size in _APPROVER_SIZES:
    _VOTE_SETS.extend(_subsets(_size))
_VOTE_CODES: dict[tuple[int, ...], int] = {c: i + 1 for i, c in enumerate(_VOTE_SETS)}

N_VOTE_COMPOSITIONS = len(_VOTE_SETS)  # 22


def party_cardinality(quest: int) -> int:
    """Codes 0..C(6,size); 0 is the unseen marker."""
    return len(_PARTY_SETS[PARTY_SCHEDULE[quest - 1]]) + 1


def vote_cardinality() -> int:
    return N_VOTE_COMPOSITIONS + 1  # 23


def outcome_cardinality() -> int:
    return 3


@dataclass(frozen=True)
class VariableSpec:
    name: str
    kind: str  # "party" | "vote" | "outcome"
    quest: int
    cardinality: int


def _build_specs() -> tuple[VariableSpec, ...]:
    specs = []
    for q in range(1, N_QUESTS + 1):
        specs.append(VariableSpec(f"p{q}", "party", q, party_cardinality(q)))
        specs.append(VariableSpec(f"v{q}", "vote", q, vote_cardinality()))
        specs.append(VariableSpec(f"o{q}", "outcome", q, outcome_cardinality()))
    return tuple(specs)


STATE_VARIABLE_SPECS = _build_specs()
STATE_CARDINALITIES = tuple(s.cardinality for s in STATE_VARIABLE_SPECS)
N_STATE_VARS = len(STATE_VARIABLE_SPECS)  # 15


# ---------------------------------------------------------------------------
# Scalar encode / decode


def encode_party(members: Iterable[int], size: int) -> int:
    key = tuple(sorted(members))
    if size not in _PARTY_CODES:
        raise ValueError(f"no quest uses parties of size {size}")
    if len(set(key)) != len(key):
        raise ValueError(f"party has duplicate members: {key}")
    if len(key) != size:
        raise ValueError(f"party must have {size} members, got {key}")
    try:
        return _PARTY_CODES[size][key]
    except KeyError:
        raise ValueError(f"invalid party members: {key}") from None


def decode_party(code: int, size: int) -> FrozenSet[int]:
    if size not in _PARTY_SETS:
        raise ValueError(f"no quest uses parties of size {size}")
    sets = _PARTY_SETS[size]
    if not 1 <= code <= len(sets):
        raise ValueError(f"party code {code} out of range 1..{len(sets)} for size {size}")
    return frozenset(sets[code - 1])


def encode_vote(approvers: Iterable[int]) -> int:
    key = tuple(sorted(approvers))
    try:
        return _VOTE_CODES[key]
    except KeyError:
        raise ValueError(
            f"approver set {key} cannot approve a party (needs 4..6 distinct seats)"
        ) from None


def decode_vote(code: int) -> FrozenSet[int]:
    if not 1 <= code <= N_VOTE_COMPOSITIONS:
        raise ValueError(f"vote code {code} out of range 1..{N_VOTE_COMPOSITIONS}")
    return frozenset(_VOTE_SETS[code - 1])


def encode_outcome(outcome: Outcome) -> int:
    return int(outcome)


def decode_outcome(code: int) -> Outcome:
    return Outcome(code)


# ---------------------------------------------------------------------------
# Encoded observations


@dataclass(frozen=True)
class EncodedState:
    """Observable history as 15 codes; invalid combinations are rejected."""

    parties: tuple[int, int, int, int, int]
    votes: tuple[int, int, int, int, int]
    outcomes: tuple[int, int, int, int, int]

    def __post_init__(self) -> None:
        for q in range(N_QUESTS):
            p, v, o = self.parties[q], self.votes[q], self.outcomes[q]
            if not 0 <= p < party_cardinality(q + 1):
                raise ValueError(f"party code {p} out of range for quest {q + 1}")
            if not 0 <= v < vote_cardinality():
                raise ValueError(f"vote code {v} out of range for quest {q + 1}")
            if not 0 <= o < outcome_cardinality():
                raise ValueError(f"outcome code {o} out of range for quest {q + 1}")
            # A quest enters the observation only once fully resolved, so its
            # three codes are either all unseen or all set.
            seen = [p != 0, v != 0, o != 0]
            if any(seen) and not all(seen):
                raise ValueError(f"quest {q + 1}: codes must be all zero or all nonzero")

    def flatten(self) -> tuple[int, ...]:
        out = []
        for q in range(N_QUESTS):
            out.extend((self.parties[q], self.votes[q], self.outcomes[q]))
        return tuple(out)

    @classmethod
    def from_flat(cls, flat: Sequence[int]) -> "EncodedState":
        if len(flat) != N_STATE_VARS:
            raise ValueError(f"expected {N_STATE_VARS} codes, got {len(flat)}")
        return cls(
            parties=tuple(int(flat[3 * q]) for q in range(N_QUESTS)),
            votes=tuple(int(flat[3 * q + 1]) for q in range(N_QUESTS)),
            outcomes=tuple(int(flat[3 * q + 2]) for q in range(N_QUESTS)),
        )

    @classmethod
    def empty(cls) -> "EncodedState":
        zeros = (0, 0, 0, 0, 0)
        return cls(parties=zeros, votes=zeros, outcomes=zeros)


def encode_game(state: GameState) -> EncodedState:
    """Encode the completed quests of a live game (pending quest stays 0)."""
    parties = [0] * N_QUESTS
    votes = [0] * N_QUESTS
    outcomes = [0] * N_QUESTS
    for q in state.quests:
        if q.outcome is Outcome.UNPLAYED:
            continue
        idx = q.index - 1
        parties[idx] = encode_party(q.party, PARTY_SCHEDULE[idx])
        approvers = tuple(p for p, approve in q.party_votes if approve)
        votes[idx] = encode_vote(approvers)
        outcomes[idx] = encode_outcome(q.outcome)
    return EncodedState(parties=tuple(parties), votes=tuple(votes), outcomes=tuple(outcomes))


# ---------------------------------------------------------------------------
# Seat rotations


def rotate_player(player: int, k: int) -> int:
    return ((player - 1 + k) % N_PLAYERS) + 1


def _rotate_set(members: tuple[int, ...], k: int) -> tuple[int, ...]:
    return tuple(sorted(rotate_player(p, k) for p in members))


def _build_rotation_tables() -> list[np.ndarray]:
    """tables[var_index][k, code] -> rotated code (code 0 fixed)."""
    tables: list[np.ndarray] = []
    for spec in STATE_VARIABLE_SPECS:
        table = np.zeros((N_PLAYERS, spec.cardinality), dtype=np.int16)
        if spec.kind == "party":
            size = PARTY_SCHEDULE[spec.quest - 1]
            for code, members in enumerate(_PARTY_SETS[size], start=1):
                for k in range(N_PLAYERS):
                    table[k, code] = _PARTY_CODES[size][_rotate_set(members, k)]
        elif spec.kind == "vote":
            for code, members in enumerate(_VOTE_SETS, start=1):
                for k in range(N_PLAYERS):
                    table[k, code] = _VOTE_CODES[_rotate_set(members, k)]
        else:  # outcomes are seat-independent
            for k in range(N_PLAYERS):
                table[k] = np.arange(spec.cardinality)
        tables.append(table)
    return tables


ROTATION_TABLES = _build_rotation_tables()


def rotate_state(state: EncodedState, k: int) -> EncodedState:
    """Relabel every seat i as ((i-1+k) mod 6)+1 throughout the observation."""
    k %= N_PLAYERS
    flat = state.flatten()
    rotated = tuple(int(ROTATION_TABLES[i][k, code]) for i, code in enumerate(flat))
    return EncodedState.from_flat(rotated)


def ego_transform(state: EncodedState, ego: int) -> EncodedState:
    """Relabel seats so the ego player sits at seat 1."""
    if not 1 <= ego <= N_PLAYERS:
        raise ValueError(f"ego must be a seat 1..{N_PLAYERS}, got {ego}")
    return rotate_state(state, (1 - ego) % N_PLAYERS)


def ego_rotation(ego: int) -> int:
    """The rotation offset ego_transform applies."""
    return (1 - ego) % N_PLAYERS


def rotate_record(record: GameRecord, k: int) -> GameRecord:
    """Relabel every seat in a finished game record by the rotation k."""
    k %= N_PLAYERS

    def rot(p: int) -> int:
        return rotate_player(int(p), k)

    def rot_votes(votes: Optional[dict]) -> Optional[dict]:
        if votes is None:
            return None
        return {str(rot(int(p))): v for p, v in votes.items()}

    quests = [
        {
            **q,
            "party": sorted(rot(p) for p in q.get("party", [])),
            "party_votes": rot_votes(q.get("party_votes", {})) or {},
        }
        for q in record.quests
    ]
    proposals = [
        {
            **pr,
            "leader": rot(pr["leader"]),
            "party": sorted(rot(p) for p in pr.get("party", [])),
            "votes": rot_votes(pr.get("votes")),
        }
        for pr in record.proposals
    ]
    chat = [{**c, "speaker": rot(c["speaker"])} for c in record.chat]
    beliefs = [
        {**b, "player": rot(b["player"])} if "player" in b else dict(b)
        for b in record.beliefs
    ]
    return GameRecord(
        seed=record.seed,
        players=list(record.players),
        roles={rot(p): r for p, r in record.roles.items()},
        quests=quests,
        chat=chat,
        winner=record.winner,
        proposals=proposals,
        beliefs=beliefs,
        meta=dict(record.meta),
    )


def circular_augment(record: GameRecord) -> list[GameRecord]:
    """All six seat rotations of a record (k=0 is the original)."""
    return [rotate_record(record, k) for k in range(N_PLAYERS)]


def rotate_flat_batch(flat: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Rotate many flattened observations at once (dataset augmentation).

    flat: (n, 15) int array of codes.  k: (n,) rotation per row.
    """
    out = np.empty_like(flat)
    kk = np.asarray(k) % N_PLAYERS
    for i in range(N_STATE_VARS):
        out[:, i] = ROTATION_TABLES[i][kk, flat[:, i]]
    return out


# ---------------------------------------------------------------------------
# Debug export


def export_enumeration_csv(path) -> None:
    """Dump the full code tables for eyeballing and downstream tooling."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["table", "size", "code", "members", "ordering"])
        for size in sorted(_PARTY_SETS):
            for code, members in enumerate(_PARTY_SETS[size], start=1):
                writer.writerow(
                    ["party", size, code, " ".join(map(str, members)), "lex"]
                )
        for code, members in enumerate(_VOTE_SETS, start=1):
            writer.writerow(
                ["vote", len(members), code, " ".join(map(str, members)), VOTE_ORDERING_TAG]
            )
        for outcome in Outcome:
            writer.writerow(["outcome", "", int(outcome), outcome.name.lower(), "enum"])
