"""Game loop: wires agents to the rules engine and emits replayable records.

Everything an agent does flows through here, so the produced GameRecord
carries enough annex data (per-ballot beliefs, per-quest belief snapshots)
to audit decisions afterwards without re-running inference.
"""

from __future__ import annotations

from typing import Mapping, Optional

from .agents import Agent, AgentDecision, BeliefAgent, make_view
from .game import (
    N_PLAYERS,
    GameRecord,
    GameState,
    Outcome,
    PartyVote,
    Phase,
    Propose,
    QuestVote,
    Role,
    RulesError,
    Say,
    apply_event,
    new_game,
    record_from_state,
)

# Hard ceiling on applied events; a legal 6-player game stays well under it.
MAX_EVENTS = 5000


class InvalidGameError(RuntimeError):
    """An agent produced an illegal decision or the game failed to halt."""


def _completed(state: GameState) -> int:
    return sum(1 for q in state.quests if q.outcome is not Outcome.UNPLAYED)


def _decision_entry(
    state: GameState, player: int, decision: AgentDecision, agent: Agent
) -> dict:
    entry: dict = {
        "round": state.quest_index,
        "phase": state.phase.value,
        "player": player,
        "kind": decision.kind,
    }
    if decision.kind == "propose":
        entry["party"] = list(decision.party)
    elif decision.kind == "party_ballot":
        entry["approve"] = bool(decision.approve)
        entry["party"] = list(state.pending_party or ())
        entry["first_party"] = state.quest_index == 1 and all(
            p.votes is None for p in state.proposals
        )
    elif decision.kind == "quest_ballot":
        entry["success"] = bool(decision.success)
    if isinstance(agent, BeliefAgent) and agent.last_result is not None:
        entry["beliefs"] = [float(b) for b in agent.last_result.b]
    return entry


def play_game(
    agents: Mapping[int, Agent],
    seed: int,
    role_assignment: Optional[Mapping[int, Role]] = None,
    chat: bool = True,
    collect_beliefs: bool = True,
) -> GameRecord:
    """Run one full game and return its record.

    `agents` maps every player id 1..6 to its policy.  With chat disabled
    the discussion slots are fast-forwarded with empty messages, which also
    disables the leader revision path.
    """
    if sorted(agents) != list(range(1, N_PLAYERS + 1)):
        raise ValueError("agents must cover players 1..6 exactly")
    state = new_game(seed, role_assignment)
    decisions: list[dict] = []
    snapshots: list[dict] = []
    events = 0

    while state.phase is not Phase.FINISHED:
        events += 1
        if events > MAX_EVENTS:
            raise InvalidGameError("game did not halt within the event budget")
        before = _completed(state)
        try:
            if state.phase is Phase.PROPOSAL:
                leader = state.leader
                decision = agents[leader].decide(make_view(state, leader))
                if decision.kind != "propose":
                    raise InvalidGameError(f"leader returned {decision.kind}")
                decisions.append(_decision_entry(state, leader, decision, agents[leader]))
                state = apply_event(state, Propose(party=decision.party))
            elif state.phase is Phase.DISCUSSION:
                speaker = state.current_speaker()
                if not chat:
                    state = apply_event(state, Say(speaker=speaker, text=""))
                    continue
                decision = agents[speaker].on_turn_to_speak(make_view(state, speaker))
                if decision.kind == "propose":
                    decisions.append(
                        _decision_entry(state, speaker, decision, agents[speaker])
                    )
                    state = apply_event(state, Propose(party=decision.party))
                elif decision.kind == "message":
                    state = apply_event(state, Say(speaker=speaker, text=decision.text))
                else:
                    raise InvalidGameError(f"speaker returned {decision.kind}")
            elif state.phase is Phase.PARTY_VOTE:
                ballots = []
                for player in range(1, N_PLAYERS + 1):
                    decision = agents[player].decide(make_view(state, player))
                    if decision.kind != "party_ballot" or decision.approve is None:
                        raise InvalidGameError("expected a party ballot")
                    decisions.append(_decision_entry(state, player, decision, agents[player]))
                    ballots.append((player, bool(decision.approve)))
                state = apply_event(state, PartyVote(ballots=tuple(ballots)))
            elif state.phase is Phase.QUEST_VOTE:
                party = state.pending_party or ()
                ballots = []
                for player in sorted(party):
                    decision = agents[player].decide(make_view(state, player))
                    if decision.kind != "quest_ballot" or decision.success is None:
                        raise InvalidGameError("expected a quest ballot")
                    decisions.append(_decision_entry(state, player, decision, agents[player]))
                    ballots.append((player, bool(decision.success)))
                state = apply_event(state, QuestVote(ballots=tuple(ballots)))
        except RulesError as exc:
            raise InvalidGameError(str(exc)) from exc

        if collect_beliefs and _completed(state) > before:
            snapshots.extend(_belief_snapshots(state, agents, _completed(state)))

    record = record_from_state(state)
    record.beliefs = snapshots
    record.meta["decisions"] = decisions
    return record


def _belief_snapshots(
    state: GameState, agents: Mapping[int, Agent], completed_round: int
) -> list[dict]:
    """After each resolved quest, log every belief agent's posterior twice:
    once with its current chat priors and once without."""
    rows = []
    for player in range(1, N_PLAYERS + 1):
        agent = agents[player]
        if not isinstance(agent, BeliefAgent):
            continue
        view = make_view(state, player)
        with_prior = agent.refresh_beliefs(view)
        without_prior = agent.beliefs_without_priors(view)
        rows.append(
            {
                "round": completed_round,
                "observer": player,
                "with_prior": [float(b) for b in with_prior],
                "without_prior": [float(b) for b in without_prior],
            }
        )
    return rows
