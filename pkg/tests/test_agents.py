"""Agent policies: the belief-driven policy rules and the baselines."""

import random

import numpy as np
import pytest

from avalonsim.agents import (
    AgentView,
    BeliefAgent,
    LLMAgent,
    RandomAgent,
    ScriptedEvilAgent,
    language_view,
    make_view,
    parse_party_response,
    parse_quest_response,
    parse_vote_response,
    rank_party,
)
from avalonsim.factor_model import conditional_provider, uniform_model
from avalonsim.game import Phase, Role, new_game
from avalonsim.language import ScriptedProvider
from tests.test_game import ROLES_14, approve_all, skip_discussion

from avalonsim.game import Propose, apply_event

NAMES = ("Sam", "Paul", "Luca", "Jane", "Kira", "Mia")
UNIFORM_FN = conditional_provider(uniform_model())


def view_for(state, player, **kw):
    view = make_view(state, player, **kw)
    return view


def test_rank_party_takes_lowest_beliefs_ties_by_index():
    beliefs = [0.0, 0.05, 0.1, 0.2, 0.3, 0.6]
    assert rank_party(beliefs, 3) == (1, 2, 3)
    # tie between players 2 and 3 resolves to the lower index
    assert rank_party([0.0, 0.2, 0.2, 0.5, 0.6, 0.7], 2) == (1, 2)


def test_make_view_hides_roles_from_good():
    state = new_game(0, role_assignment=ROLES_14)
    good = make_view(state, 3)
    assert good.role is Role.GOOD
    assert good.evil_partners == ()
    evil = make_view(state, 1)
    assert evil.role is Role.EVIL
    assert set(evil.evil_partners) == {1, 2}  # both ids; self filtered later


def test_belief_agent_round_one_behavior():
    state = new_game(1, role_assignment=ROLES_14)
    agent = BeliefAgent(state.leader, UNIFORM_FN, seed=9)
    decision = agent.decide(make_view(state, state.leader))
    assert decision.kind == "propose"
    assert len(decision.party) == 2
    # first party of the game is always approved by the policy
    state = apply_event(state, Propose(party=decision.party))
    state = skip_discussion(state)
    voter = BeliefAgent(4, UNIFORM_FN, seed=2)
    ballot = voter.decide(make_view(state, 4))
    assert ballot.kind == "party_ballot" and ballot.approve is True


def test_belief_agent_rejects_suspicious_member():
    """A pending party with any member at or above one half is rejected."""
    state = new_game(1, role_assignment=ROLES_14)
    # burn the first-party freebie on quest 1
    state = apply_event(state, Propose(party=(3, 4)))
    state = skip_discussion(state)
    state = apply_event(state, approve_all())
    from avalonsim.game import QuestVote

    state = apply_event(state, QuestVote(ballots=((3, False), (4, True))))
    assert state.quest_index == 2
    state = apply_event(state, Propose(party=(3, 4, 5)))
    state = skip_discussion(state)
    agent = BeliefAgent(6, conditional_provider(uniform_model()), seed=0)
    view = make_view(state, 6)
    decision = agent.decide(view)
    assert decision.kind == "party_ballot"
    # uniform conditionals leave everyone at exactly 0.5, which is not < 0.5
    assert decision.approve is False
    assert np.all(agent.last_result.b[np.array(view.pending_party) - 1] >= 0.5)


def test_belief_agent_quest_ballot_always_success():
    state = new_game(1, role_assignment=ROLES_14)
    state = apply_event(state, Propose(party=(1, 3)))
    state = skip_discussion(state)
    state = apply_event(state, approve_all())
    agent = BeliefAgent(3, UNIFORM_FN, seed=0)
    decision = agent.decide(make_view(state, 3))
    assert decision.kind == "quest_ballot" and decision.success is True


def test_belief_agent_proposes_rank_party_after_round_one():
    state = new_game(1, role_assignment=ROLES_14)
    state = apply_event(state, Propose(party=(3, 4)))
    state = skip_discussion(state)
    state = apply_event(state, approve_all())
    from avalonsim.game import QuestVote

    state = apply_event(state, QuestVote(ballots=((3, False), (4, True))))
    leader = state.leader
    agent = BeliefAgent(leader, conditional_provider(uniform_model()), seed=0)
    decision = agent.decide(make_view(state, leader))
    beliefs = agent.last_result.b
    assert decision.kind == "propose"
    assert decision.party == rank_party(list(beliefs), state.party_size())


def test_random_agent_good_never_fails():
    state = new_game(2, role_assignment=ROLES_14)
    state = apply_event(state, Propose(party=(3, 4)))
    state = skip_discussion(state)
    state = apply_event(state, approve_all())
    for seed in range(30):
        agent = RandomAgent(3, seed=seed)
        decision = agent.decide(make_view(state, 3))
        assert decision.kind == "quest_ballot" and decision.success is True


def test_random_agent_evil_fail_probability():
    state = new_game(2, role_assignment=ROLES_14)
    state = apply_event(state, Propose(party=(1, 3)))
    state = skip_discussion(state)
    state = apply_event(state, approve_all())
    always = [RandomAgent(1, seed=s, evil_fail_prob=1.0).decide(make_view(state, 1)).success
              for s in range(40)]
    assert not any(always)
    half = [RandomAgent(1, seed=s, evil_fail_prob=0.5).decide(make_view(state, 1)).success
            for s in range(400)]
    rate = 1 - sum(half) / len(half)
    assert 0.4 < rate < 0.6


def test_random_agent_party_ballot_rate():
    state = new_game(2, role_assignment=ROLES_14)
    state = apply_event(state, Propose(party=(3, 4)))
    state = skip_discussion(state)
    votes = [RandomAgent(5, seed=s).decide(make_view(state, 5)).approve for s in range(600)]
    rate = sum(votes) / len(votes)
    assert 0.42 < rate < 0.58  # party_approve_prob defaults to a fair coin


def test_random_agent_self_bias():
    state = new_game(2, role_assignment=ROLES_14)
    state = apply_event(state, Propose(party=(3, 4)))
    state = skip_discussion(state)
    votes = [
        RandomAgent(3, seed=s, party_approve_prob=0.5, self_bias=0.5)
        .decide(make_view(state, 3)).approve
        for s in range(200)
    ]
    assert all(votes)  # 0.5 + 0.5 saturates at always-approve for members


def test_random_agent_proposes_legal_party():
    state = new_game(2, role_assignment=ROLES_14)
    for seed in range(20):
        agent = RandomAgent(state.leader, seed=seed)
        decision = agent.decide(make_view(state, state.leader))
        assert decision.kind == "propose"
        assert len(set(decision.party)) == state.party_size()
        assert all(1 <= p <= 6 for p in decision.party)


def test_scripted_evil_party_contains_exactly_one_evil():
    state = new_game(2, role_assignment=ROLES_14)
    for seed in range(25):
        agent = ScriptedEvilAgent(1, seed=seed)
        decision = agent.decide(make_view(state, 1))
        evil_aboard = len(set(decision.party) & {1, 2})
        assert evil_aboard == 1


def test_scripted_evil_deceive_proposes_clean_party():
    state = new_game(2, role_assignment=ROLES_14)
    agent = ScriptedEvilAgent(1, seed=3, deceive_prob=1.0)
    decision = agent.decide(make_view(state, 1))
    assert set(decision.party) & {1, 2} == set()


def test_scripted_evil_ballots():
    state = new_game(2, role_assignment=ROLES_14)
    state = apply_event(state, Propose(party=(1, 3)))
    state = skip_discussion(state)
    agent = ScriptedEvilAgent(2, seed=0, reject_good_prob=1.0)
    assert agent.decide(make_view(state, 2)).approve is True  # partner aboard

    state2 = new_game(2, role_assignment=ROLES_14)
    state2 = apply_event(state2, Propose(party=(3, 4)))
    state2 = skip_discussion(state2)
    assert ScriptedEvilAgent(2, seed=0, reject_good_prob=1.0).decide(
        make_view(state2, 2)).approve is False


def test_scripted_evil_fail_from_quest():
    from avalonsim.game import QuestVote

    state = new_game(2, role_assignment=ROLES_14)
    state = apply_event(state, Propose(party=(1, 3)))
    state = skip_discussion(state)
    state = apply_event(state, approve_all())
    early = ScriptedEvilAgent(1, seed=0, fail_prob=1.0, fail_from_quest=2)
    assert early.decide(make_view(state, 1)).success is True  # holds back on quest 1
    now = ScriptedEvilAgent(1, seed=0, fail_prob=1.0, fail_from_quest=1)
    assert now.decide(make_view(state, 1)).success is False


# -- LLM response parsing (safe defaults, never crash)


def test_parse_party_by_names():
    raw = '{"party": ["Sam", "Luca", "Jane"], "message": "team"}'
    party, message = parse_party_response(raw, NAMES, 3)
    assert party == (1, 3, 4)
    assert message == "team"


def test_parse_party_wrong_size_rejected():
    party, _ = parse_party_response('{"party": ["Sam", "Luca"]}', NAMES, 3)
    assert party is None


def test_parse_party_unknown_name_rejected():
    party, _ = parse_party_response('{"party": ["Sam", "Bob", "Jane"]}', NAMES, 3)
    assert party is None


def test_parse_vote_variants():
    assert parse_vote_response('{"vote": "approve"}') is True
    assert parse_vote_response('{"vote": "disapprove"}') is False
    assert parse_vote_response("gibberish") is None


def test_parse_quest_variants():
    assert parse_quest_response('{"vote": "success"}') is True
    assert parse_quest_response('{"vote": "fail"}') is False
    assert parse_quest_response('{"vote": true}') is True
    assert parse_quest_response("") is None


def test_llm_agent_safe_defaults_on_garbage():
    state = new_game(4, role_assignment=ROLES_14)
    provider = ScriptedProvider(respond=lambda prompt: "utter nonsense")
    agent = LLMAgent(state.leader, provider, seed=1)
    decision = agent.decide(make_view(state, state.leader))
    assert decision.kind == "propose" and len(decision.party) == state.party_size()

    state = apply_event(state, Propose(party=decision.party))
    state = skip_discussion(state)
    ballot = LLMAgent(5, ScriptedProvider(respond=lambda p: "???"), seed=1).decide(
        make_view(state, 5))
    assert ballot.kind == "party_ballot" and ballot.approve is True  # safe default


def test_llm_agent_follows_parseable_party():
    state = new_game(4, role_assignment=ROLES_14)
    provider = ScriptedProvider(respond=lambda p: '{"party": ["Paul", "Kira"], "message": "a"}')
    agent = LLMAgent(state.leader, provider, seed=1)
    decision = agent.decide(make_view(state, state.leader))
    assert decision.party == (2, 5)


def test_language_view_projection():
    state = new_game(0, role_assignment=ROLES_14)
    state = apply_event(state, Propose(party=(3, 4)))
    view = make_view(state, 3)
    sv = language_view(view, beliefs={p: 0.5 for p in range(1, 7)})
    assert sv.self_id == 3
    assert sv.proposed_party == (3, 4)
    assert sv.is_evil is False


def test_belief_agent_revises_before_close_slot():
    """In the leader close slot the agent revises when its ranking diverges
    from the pending proposal."""
    from avalonsim.game import QuestVote, Say

    state = new_game(1, role_assignment=ROLES_14)
    state = apply_event(state, Propose(party=(3, 4)))
    state = skip_discussion(state)
    state = apply_event(state, approve_all())
    state = apply_event(state, QuestVote(ballots=((3, False), (4, True))))
    # quest 2: leader proposes a party including a quest-1 suspect, then the
    # failing member's beliefs argue for a different lineup at the close slot
    leader = state.leader
    agent = BeliefAgent(leader, conditional_provider(uniform_model()), seed=0)
    own = agent.decide(make_view(state, leader))
    worst = rank_party([-b for b in agent.last_result.b], state.party_size())
    state = apply_event(state, Propose(party=worst))
    while not state.in_leader_close_slot():
        state = apply_event(state, Say(state.current_speaker(), "talk"))
    decision = agent.on_turn_to_speak(make_view(state, leader))
    assert decision.kind == "propose"
    assert decision.party == own.party
