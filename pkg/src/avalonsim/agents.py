"""Agent policies: the belief-propagation agent and its sparring partners.

Agents see the game only through AgentView (public history plus their own
role; Evil seats additionally know their partner).  Decisions come back as
AgentDecision values the runner translates into engine events, so policies
stay pure and replayable: same view, same seed, same provider transcript,
same decision.
"""

from __future__ import annotations

import ast
import itertools
import json
import logging
import random
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .codec import EncodedState, encode_game
from .game import (
    DEFAULT_PLAYER_NAMES,
    N_PLAYERS,
    PARTY_SCHEDULE,
    GameState,
    Outcome,
    Phase,
    ProposalRecord,
    QuestRecord,
    Role,
)
from .inference import BeliefVector, BPConfig, build_graph, run_max_product
from .language import (
    BetaSchedule,
    ChatProvider,
    StateView,
    build_action_prompt,
    generate_message,
    judge_priors,
    to_prior,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AgentView:
    """Per-seat projection of the game; hidden roles never appear here."""

    player_id: int
    role: Role
    evil_partners: Tuple[int, ...]  # empty unless the viewer is Evil
    phase: Phase
    round_number: int
    leader: int
    party_size: int
    pending_party: Optional[Tuple[int, ...]]
    consecutive_rejections: int
    quests: Tuple[QuestRecord, ...]
    proposals: Tuple[ProposalRecord, ...]
    chat: Tuple  # ChatEntry tuple; read-only
    first_party_of_game: bool
    in_leader_close_slot: bool
    awaiting_justification: bool
    names: Tuple[str, ...] = DEFAULT_PLAYER_NAMES
    beliefs: Optional[np.ndarray] = None

    def encoded(self) -> EncodedState:
        parties = [0] * 5
        votes = [0] * 5
        outcomes = [0] * 5
        from .codec import encode_party, encode_vote  # narrow import, no cycle

        for q in self.quests:
            if q.outcome is Outcome.UNPLAYED:
                continue
            idx = q.index - 1
            parties[idx] = encode_party(q.party, len(q.party))
            approvers = [p for p, approve in q.party_votes if approve]
            votes[idx] = encode_vote(approvers)
            outcomes[idx] = int(q.outcome)
        return EncodedState(tuple(parties), tuple(votes), tuple(outcomes))


def make_view(
    state: GameState, player: int, beliefs: Optional[np.ndarray] = None
) -> AgentView:
    role = state.role_of(player)
    partners = state.evil_players() if role is Role.EVIL else ()
    first_party = state.quest_index == 1 and all(
        p.votes is None for p in state.proposals
    )
    return AgentView(
        player_id=player,
        role=role,
        evil_partners=tuple(partners),
        phase=state.phase,
        round_number=state.quest_index,
        leader=state.leader,
        party_size=state.party_size(),
        pending_party=state.pending_party,
        consecutive_rejections=state.consecutive_rejections,
        quests=state.quests,
        proposals=state.proposals,
        chat=state.chat,
        first_party_of_game=first_party,
        in_leader_close_slot=state.in_leader_close_slot(),
        awaiting_justification=state.awaiting_justification,
        beliefs=beliefs,
    )


@dataclass(frozen=True)
class AgentDecision:
    kind: str  # "propose" | "message" | "party_ballot" | "quest_ballot"
    party: Tuple[int, ...] = ()
    text: str = ""
    approve: Optional[bool] = None
    success: Optional[bool] = None


def _all_parties(size: int) -> list[Tuple[int, ...]]:
    return list(itertools.combinations(range(1, N_PLAYERS + 1), size))


def language_view(view: AgentView, beliefs: Optional[dict] = None) -> StateView:
    """Shape an AgentView into the prompt builder's input."""
    chat_lines = [
        f"{view.names[entry.speaker - 1]}: {entry.text}"
        for entry in view.chat
        if entry.quest == view.round_number
    ]
    quest_summaries = []
    for q in view.quests:
        if q.outcome is Outcome.UNPLAYED:
            continue
        members = ", ".join(view.names[p - 1] for p in q.party)
        outcome = "success" if q.outcome is Outcome.SUCCESS else "fail"
        quest_summaries.append(f"Quest {q.index} party: [{members}] Outcome: {outcome}")
    previous_teams = []
    for i, pr in enumerate(view.proposals, start=1):
        if pr.votes is None:
            continue
        members = ", ".join(view.names[p - 1] for p in pr.party)
        votes = ", ".join(
            f"{view.names[p - 1]}: {'Yes' if a else 'No'}" for p, a in pr.votes
        )
        previous_teams.append(
            f"Team {i} (proposed by {view.names[pr.leader - 1]} in quest {pr.quest}): "
            f"[{members}] | Votes: {votes}"
        )
    return StateView(
        self_id=view.player_id,
        names=view.names,
        round_number=view.round_number,
        turn_number=len(chat_lines),
        beliefs=beliefs or {},
        chat_lines=chat_lines,
        quest_summaries=quest_summaries,
        previous_teams=previous_teams,
        leader_id=view.leader,
        proposed_party=tuple(view.pending_party or ()),
        party_size=view.party_size,
        rejection_count=view.consecutive_rejections,
        is_evil=view.role is Role.EVIL,
        evil_partners=tuple(p for p in view.evil_partners if p != view.player_id),
    )


class Agent:
    """Base: one instance drives one seat for one game at a time."""

    def __init__(self, player_id: int, seed: int = 0) -> None:
        self.player_id = player_id
        self.rng = random.Random(seed)

    def decide(self, view: AgentView) -> AgentDecision:
        raise NotImplementedError

    def on_turn_to_speak(self, view: AgentView) -> AgentDecision:
        return AgentDecision(kind="message", text="")


# ---------------------------------------------------------------------------
# Belief-propagation agent


def rank_party(beliefs: Sequence[float], size: int) -> Tuple[int, ...]:
    """The `size` players with the lowest Evil beliefs; index breaks ties."""
    order = sorted(range(1, N_PLAYERS + 1), key=lambda p: (beliefs[p - 1], p))
    return tuple(sorted(order[:size]))


class BeliefAgent(Agent):
    """Tracks hidden roles with max-product BP; acts on the belief ranking.

    With a chat provider attached, each speaking turn first converts the
    round's messages into per-player priors, then re-runs inference; without
    one (graph-only mode) priors stay uniform and chat is a canned line.
    """

    def __init__(
        self,
        player_id: int,
        factor_fn,
        seed: int = 0,
        provider: Optional[ChatProvider] = None,
        beta_schedule: Optional[BetaSchedule] = None,
        bp_config: Optional[BPConfig] = None,
    ) -> None:
        super().__init__(player_id, seed)
        self.factor_fn = factor_fn
        self.provider = provider
        self.beta_schedule = beta_schedule or BetaSchedule()
        self.bp_config = bp_config or BPConfig()
        self.current_priors: Optional[list[float]] = None
        self.last_result: Optional[BeliefVector] = None
        self._pending_pitch: Optional[str] = None

    # -- inference plumbing

    def refresh_beliefs(self, view: AgentView) -> np.ndarray:
        graph = build_graph(view.encoded(), self.player_id, self.factor_fn)
        result = run_max_product(graph, self.bp_config, priors=self.current_priors)
        self.last_result = result
        return result.b

    def beliefs_without_priors(self, view: AgentView) -> np.ndarray:
        graph = build_graph(view.encoded(), self.player_id, self.factor_fn)
        return run_max_product(graph, self.bp_config, priors=None).b

    # -- policy

    def decide(self, view: AgentView) -> AgentDecision:
        if view.phase is Phase.PROPOSAL:
            if view.round_number == 1:
                party = self.rng.sample(range(1, N_PLAYERS + 1), view.party_size)
                return AgentDecision(kind="propose", party=tuple(sorted(party)))
            beliefs = self.refresh_beliefs(view)
            return AgentDecision(kind="propose", party=rank_party(beliefs, view.party_size))
        if view.phase is Phase.PARTY_VOTE:
            if view.first_party_of_game:
                return AgentDecision(kind="party_ballot", approve=True)
            beliefs = self.refresh_beliefs(view)
            party = view.pending_party or ()
            approve = all(beliefs[p - 1] < 0.5 for p in party)
            return AgentDecision(kind="party_ballot", approve=approve)
        if view.phase is Phase.QUEST_VOTE:
            return AgentDecision(kind="quest_ballot", success=True)
        raise ValueError(f"no decision defined for phase {view.phase}")

    def on_turn_to_speak(self, view: AgentView) -> AgentDecision:
        beliefs = self._update_from_chat(view)
        if view.awaiting_justification:
            return AgentDecision(kind="message", text=self._speak(view, beliefs, "revision"))
        if view.in_leader_close_slot and view.round_number > 1:
            preferred = rank_party(beliefs, view.party_size)
            pending = tuple(sorted(view.pending_party or ()))
            if preferred != pending:
                self._pending_pitch = None
                return AgentDecision(kind="propose", party=preferred)
        kind = "proposal_pitch" if self._consume_pitch(view) else "discussion"
        return AgentDecision(kind="message", text=self._speak(view, beliefs, kind))

    def _consume_pitch(self, view: AgentView) -> bool:
        # The leader's first message of a proposal pitches the party.
        round_chat = [c for c in view.chat if c.quest == view.round_number]
        return view.leader == self.player_id and not any(
            c.speaker == self.player_id for c in round_chat
        )

    def _update_from_chat(self, view: AgentView) -> np.ndarray:
        if self.provider is not None:
            belief_map = {}
            if self.last_result is not None:
                belief_map = {p + 1: float(b) for p, b in enumerate(self.last_result.b)}
            judgment = judge_priors(language_view(view, belief_map), self.provider)
            beta = self.beta_schedule.for_round(view.round_number)
            self.current_priors = to_prior(judgment, beta)
        return self.refresh_beliefs(view)

    def _speak(self, view: AgentView, beliefs: np.ndarray, kind: str) -> str:
        if self.provider is None:
            return {
                "proposal_pitch": "this lineup looks safest to me",
                "revision": "switching the team based on how this round went",
                "discussion": "ok with me so far",
            }[kind]
        belief_map = {p + 1: float(b) for p, b in enumerate(beliefs)}
        return generate_message(kind, language_view(view, belief_map), self.provider)


# ---------------------------------------------------------------------------
# Baselines


class RandomAgent(Agent):
    """Uniform legal play, except Good never fails a quest.

    party_approve_prob sets the base ballot rate; self_bias is added to it
    when the voter is on the proposed party (people like their own teams).
    """

    def __init__(
        self,
        player_id: int,
        seed: int = 0,
        evil_fail_prob: float = 1.0,
        party_approve_prob: float = 0.5,
        self_bias: float = 0.0,
    ) -> None:
        super().__init__(player_id, seed)
        self.evil_fail_prob = evil_fail_prob
        self.party_approve_prob = party_approve_prob
        self.self_bias = self_bias

    def decide(self, view: AgentView) -> AgentDecision:
        if view.phase is Phase.PROPOSAL:
            party = self.rng.sample(range(1, N_PLAYERS + 1), view.party_size)
            return AgentDecision(kind="propose", party=tuple(sorted(party)))
        if view.phase is Phase.PARTY_VOTE:
            threshold = self.party_approve_prob
            if self.player_id in (view.pending_party or ()):
                threshold = min(1.0, threshold + self.self_bias)
            return AgentDecision(kind="party_ballot", approve=self.rng.random() < threshold)
        if view.phase is Phase.QUEST_VOTE:
            if view.role is Role.GOOD:
                return AgentDecision(kind="quest_ballot", success=True)
            fail = self.rng.random() < self.evil_fail_prob
            return AgentDecision(kind="quest_ballot", success=not fail)
        raise ValueError(f"no decision defined for phase {view.phase}")

    def on_turn_to_speak(self, view: AgentView) -> AgentDecision:
        lines = ("hm", "idk yet", "sounds fine", "lets just play", "sure")
        return AgentDecision(kind="message", text=self.rng.choice(lines))


class ScriptedEvilAgent(Agent):
    """Knob-driven Evil: proposes parties with exactly one Evil member
    (unless deceiving, then all Good), rejects all-Good parties with
    probability reject_good_prob, and from quest fail_from_quest onward
    fails quests with probability fail_prob (0.7 matches the
    two-failed-parties setup used for exact-table factor checks)."""

    def __init__(
        self,
        player_id: int,
        seed: int = 0,
        fail_prob: float = 1.0,
        reject_good_prob: float = 1.0,
        deceive_prob: float = 0.0,
        fail_from_quest: int = 1,
    ) -> None:
        super().__init__(player_id, seed)
        self.fail_prob = fail_prob
        self.reject_good_prob = reject_good_prob
        self.deceive_prob = deceive_prob
        self.fail_from_quest = fail_from_quest

    def decide(self, view: AgentView) -> AgentDecision:
        evil = set(view.evil_partners)
        if view.phase is Phase.PROPOSAL:
            goods = [p for p in range(1, N_PLAYERS + 1) if p not in evil]
            if self.rng.random() < self.deceive_prob:
                fill = self.rng.sample(goods, view.party_size)
                return AgentDecision(kind="propose", party=tuple(sorted(fill)))
            chosen_evil = self.rng.choice(sorted(evil))
            fill = self.rng.sample(goods, view.party_size - 1)
            return AgentDecision(kind="propose", party=tuple(sorted([chosen_evil] + fill)))
        if view.phase is Phase.PARTY_VOTE:
            party = set(view.pending_party or ())
            if party & evil:
                return AgentDecision(kind="party_ballot", approve=True)
            reject = self.rng.random() < self.reject_good_prob
            return AgentDecision(kind="party_ballot", approve=not reject)
        if view.phase is Phase.QUEST_VOTE:
            if view.round_number < self.fail_from_quest:
                return AgentDecision(kind="quest_ballot", success=True)
            fail = self.rng.random() < self.fail_prob
            return AgentDecision(kind="quest_ballot", success=not fail)
        raise ValueError(f"no decision defined for phase {view.phase}")

    def on_turn_to_speak(self, view: AgentView) -> AgentDecision:
        lines = ("i trust this group", "seems reasonable", "im good with it", "why not")
        return AgentDecision(kind="message", text=self.rng.choice(lines))


# ---------------------------------------------------------------------------
# Chat-driven baseline agent


def _extract_dict(raw: str) -> Optional[dict]:
    brace = re.search(r"\{.*\}", raw or "", re.DOTALL)
    if not brace:
        return None
    for loader in (json.loads, ast.literal_eval):
        try:
            parsed = loader(brace.group(0))
            if isinstance(parsed, dict):
                return parsed
        except (ValueError, SyntaxError):
            continue
    return None


def parse_party_response(
    raw: str, names: Sequence[str], size: int
) -> Tuple[Optional[Tuple[int, ...]], str]:
    payload = _extract_dict(raw) or {}
    message = payload.get("message") if isinstance(payload.get("message"), str) else ""
    party_names = payload.get("party")
    if not isinstance(party_names, list):
        return None, message
    name_to_id = {n.lower(): i + 1 for i, n in enumerate(names)}
    ids = []
    for entry in party_names:
        if not isinstance(entry, str):
            return None, message
        player = name_to_id.get(entry.strip().lower())
        if player is None or player in ids:
            return None, message
        ids.append(player)
    if len(ids) != size:
        return None, message
    return tuple(sorted(ids)), message


def parse_vote_response(raw: str) -> Optional[bool]:
    payload = _extract_dict(raw)
    token = ""
    if payload and isinstance(payload.get("vote"), str):
        token = payload["vote"].strip().lower()
    else:
        lowered = (raw or "").lower()
        if "disapprove" in lowered:
            token = "disapprove"
        elif "approve" in lowered:
            token = "approve"
    if token == "approve":
        return True
    if token == "disapprove":
        return False
    return None


def parse_quest_response(raw: str) -> Optional[bool]:
    payload = _extract_dict(raw)
    token = None
    if payload is not None:
        token = payload.get("vote")
    if isinstance(token, bool):
        return token
    if isinstance(token, str):
        t = token.strip().lower()
        if t in ("true", "success"):
            return True
        if t in ("false", "fail"):
            return False
    return None


class LLMAgent(Agent):
    """Baseline driven entirely by provider responses, with safe defaults:
    unparseable output degrades to approve / success / a random party."""

    def __init__(self, player_id: int, provider: ChatProvider, seed: int = 0) -> None:
        super().__init__(player_id, seed)
        self.provider = provider
        self._pending_pitch: Optional[str] = None

    def _call(self, kind: str, view: AgentView) -> str:
        prompt = build_action_prompt(kind, language_view(view))
        try:
            text, _ = self.provider.call(prompt)
            return text
        except Exception as exc:  # ProviderError or transport-level failure
            logger.warning("provider call failed for %s: %s", kind, exc)
            return ""

    def decide(self, view: AgentView) -> AgentDecision:
        if view.phase is Phase.PROPOSAL:
            raw = self._call("propose", view)
            party, message = parse_party_response(raw, view.names, view.party_size)
            if party is None:
                logger.warning("falling back to a random party proposal")
                party = tuple(sorted(self.rng.sample(range(1, N_PLAYERS + 1), view.party_size)))
            self._pending_pitch = message or None
            return AgentDecision(kind="propose", party=party)
        if view.phase is Phase.PARTY_VOTE:
            approve = parse_vote_response(self._call("party_vote", view))
            if approve is None:
                approve = True
            return AgentDecision(kind="party_ballot", approve=approve)
        if view.phase is Phase.QUEST_VOTE:
            success = parse_quest_response(self._call("quest_vote", view))
            if success is None:
                success = True
            return AgentDecision(kind="quest_ballot", success=success)
        raise ValueError(f"no decision defined for phase {view.phase}")

    def on_turn_to_speak(self, view: AgentView) -> AgentDecision:
        if self._pending_pitch:
            text, self._pending_pitch = self._pending_pitch, None
            return AgentDecision(kind="message", text=text)
        raw = self._call("discussion", view)
        payload = _extract_dict(raw)
        text = ""
        if payload and isinstance(payload.get("message"), str):
            text = payload["message"].strip()
        if not text:
            text = "nothing to add right now"
        return AgentDecision(kind="message", text=text)
