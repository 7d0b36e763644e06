"""Chat prompts, qualitative judgment parsing, numeric priors, providers.

Prompt text is assembled from fixed modules (rules, role, game state, task)
so every agent sees the same framing.  A provider call returns raw text; the
parsers here are deliberately forgiving: a malformed response downgrades to
a neutral judgment or a canned chat line and the game continues.

Judgments map each player to higher / lower / same, which become numeric
priors through the fixed rule: higher -> 0.5 + beta, lower -> 0.5 - beta,
same -> 0.5, with beta following a per-round schedule.
"""

from __future__ import annotations

import ast
import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional, Sequence, Tuple

import httpx

from .game import DEFAULT_PLAYER_NAMES, N_PLAYERS, N_QUESTS

logger = logging.getLogger(__name__)

HIGHER, LOWER, SAME = "higher", "lower", "same"
_TOKENS = (HIGHER, LOWER, SAME)

DEFAULT_BETA_SCHEDULE = (0.05, 0.05, 0.10, 0.15, 0.15)

FALLBACK_MESSAGES = {
    "proposal_pitch": "i think this team gives us the best shot, lets go with it",
    "revision": "changed my mind on the lineup, this one feels safer",
    "discussion": "not sure yet, nothing stands out to me so far",
}


# ---------------------------------------------------------------------------
# Prompt modules

RULES_BLOCK = """You are playing a social deduction game, The Resistance: Avalon. The game consists of 6 total players: 4 Loyal Servants of Arthur (good players) and 2 Minions of Mordred (evil players) -- there are no special roles. The game consists of up to 5 Rounds, each consisting of a Team Building phase and a Quest phase. Good players win the game by successfully completing 3 Quests. Evil players win if 3 Quests end in failure.

In the Team Building phase the Leader proposes a Team (a party) to complete a Quest (a mission) -- a majority of players will either approve the proposed Team and move to the Quest phase, or reject the proposed Team passing leadership to the next player and repeating the process until a Team is approved. If 5 Team proposals are consecutively rejected (for the same quest), the game will end and the evil side will win. In the Quest phase those players selected to be on the Team will determine if the quest is successful through a hidden vote. For a Quest to succeed, all Team members must vote for success -- a single failure vote will cause the Quest to fail."""

GOOD_ROLE_BLOCK = """Your name in this game is {name}, and you are a loyal Servant of Arthur (a good player). The evil players know who each other are, but you and other good players have no special knowledge of anyone's role. Therefore, evil players will use deception and pretend to be good so they can participate in Quests and cause them to fail. As a good player, your goal is to ensure that Quests succeed by selecting other good players to participate in Quests. Approve only Teams where you trust everyone. Even a single evil player on the team is enough for failure."""

EVIL_ROLE_BLOCK = """Your name in this game is {name}, and you are a Minion of Mordred (an evil player). The good players have no special knowledge of anyone's role, including yours, and your strategy is to pretend to be a good player such that you are selected for Quests and can vote for them to fail. Your subtle misdirections should aim to create confusion and prevent 3 missions from succeeding. In discussions, maintain your disguise as a good player, but during voting you should vote to fail Quests. Remember, as an evil player you win the game by causing 3 Quests to fail.

Your special information, just for you, is:
{evil_lines}

Note: You have received special information which you need to keep private. Keep the information confidential and use it wisely. Furthermore try to not make general statements which could indicate that you are hiding something."""

BELIEF_STATE_BLOCK = """At the start of this round, your current beliefs about each player's alignment are given as a probability dictionary, where 0 means definitely good, 1 means definitely evil, and values in between indicate uncertainty:

{belief_dict}

These probabilities represent your current beliefs based on prior rounds but do not account for new messages or actions this round. You can use them to reason about the game, but do not explicitly mention the values or refer to them as externally provided -- these should represent your internally held beliefs.

The following messages have already been exchanged this round. This consists of both player chat messages and game system messages, with the most recent being last:
START CHAT MESSAGES
{chat_history}
END CHAT MESSAGES

The current Round is {round_number}. The previous Rounds consisted of the following Quest Teams and outcomes:
{quest_summaries}"""

PARTY_PROPOSAL_TASK = """You are the party leader this round, and you must propose a team for the mission. The team you have chosen: {party_names}. Keep in mind that the party size is fixed in each Round and the party this Round must consist of {party_size} players.

Now, respond in the game chat as if you are a college student, typing informally (e.g., using abbreviations, casual language, and minimal punctuation). Do not use overly formal or structured responses and do not use emojis. Make your response detailed enough to persuade other players but do not be overly verbose. Shorter messages are more effective; don't use more than a few sentences and prefer fewer when possible.

Explain why you picked this team. Convince the other players that this is the best choice. If there are any doubts from other players, acknowledge them but defend your reasoning. If your belief in the team is strong, argue confidently; if you are uncertain, express that but still justify your choice.
Please respond with a JSON object with one key named 'message' containing your chat message."""

DISCUSSION_TASK = """The current mission proposal: {leader_name} has proposed the following players for this mission: {party_names}. Keep in mind that the party size is fixed in each Round and the party this Round must consist of {party_size} players.

Now, respond in the game chat as if you are a college student, typing informally (e.g., using abbreviations, casual language, and minimal punctuation). Do not use overly formal or structured responses and do not use emojis. Make your response detailed enough to persuade other players but do not be overly verbose. Shorter messages are more effective; don't use more than a few sentences and prefer fewer when possible.

React to the proposed party. If you agree, say why you think it's a good choice. If you disagree, make an argument against it and suggest who you think should go instead. Take into account how strongly you hold your beliefs (if the probabilities are closer to 0.5 than 0 or 1, you should express uncertainty rather than strong opinions).
Respond to chat messages sent by other players. If someone says something you agree with, acknowledge it; if someone accuses you, defend yourself logically. Unless you have a strongly held belief about a player, it is not always worth arguing for or against specific players, especially early in the game such as on Quest 1.
Please respond with a JSON object with one key named 'message' containing your chat message."""

PRIOR_TASK = """Now, analyze how the new chat messages and game actions affect your beliefs about each player's alignment. For each player, decide if their probability of being evil should:
- Increase (if their behavior suggests they might be evil)
- Decrease (if their behavior suggests they might be good)
- Stay the same (if there is no strong evidence to change your belief)

Consider whether they are behaving suspiciously or illogically with respect to chat messages or party votes, e.g. always rejecting party votes unless they or another specific player is in it, or making assertions without evidence (especially early in the game such as on Quest 1 where evidence is limited) as these may be signs a player is evil.
Also consider whether their beliefs align with your own, or if their beliefs seem contrary to the group consensus as there are more Servants than Minions and could also suggest a player is evil.
Provide your updated belief adjustments as a JSON message, mapping player names to 'increase', 'decrease', or 'same'. Do not explain your reasoning--just return the JSON message.
If there isn't sufficient evidence to update a belief about a player, then it is safer to indicate 'same'.
Example output:
{{'Sam': 'increase', 'Paul': 'increase', 'Luca': 'same', 'Jane': 'decrease', 'Kira': 'same', 'Mia': 'decrease'}}"""

# Task prompts for the baseline chat-driven agent.  The structured-response
# schema lines stand in for a schema library; parsers accept exactly these.

ACTION_STATE_BLOCK = """YOUR PRIOR ACTIONS THIS TURN:
{self_actions}

CURRENT GAME STATE:
- Current Quest: {round_number}
- Current Turn: {turn_number}
- Failed Party Votes: {rejection_count}
- Quest Results:
{quest_summaries}
- Current Leader: {leader_name}
- Proposed Team: {party_names}

GAME HISTORY:
Previous Teams:
{previous_teams}

DETAILED GAME LOG:
{chat_history}"""

PROPOSAL_SCHEMA_BLOCK = """Respond with a JSON object of the form {{"party": ["<player name>", ...], "message": "<chat message>"}}."""

VOTE_SCHEMA_BLOCK = """Respond with a JSON object of the form {{"vote": "<approve or disapprove>"}}."""

QUEST_SCHEMA_BLOCK = """Respond with a JSON object of the form {{"vote": "<true or false>"}}."""

GOOD_PROPOSAL_TASK = """Your objective is to propose a mission team consisting of {party_size} players.
Consider the following factors when selecting team members:
1. Past involvement and actions of each player
2. Contributions in previous missions
3. Any indications of players being on the evil side
4. Suspicious or trustworthy behaviors

When looking for suspicious behavior, consider whether players are behaving suspiciously or illogically with respect to chat messages or party votes, e.g. always rejecting party votes unless they or another specific player is in it, or making assertions without evidence (especially early in the game such as on Quest 1 where evidence is limited) as these may be signs a player is evil.
Also consider whether their beliefs align with your own, or if their beliefs seem contrary to the group consensus as there are more Servants than Minions and could also suggest a player is evil.
Unless you have a strong reason to doubt a player, it is not always worth arguing for or against specific players, especially early in the game such as on Quest 1.

Present your team selection to the other players with a detailed rationale based on past events and player behaviors.
Remember that you are on the good side - avoid selecting players who seem suspicious or were part of failed missions.
It's conventional to include yourself in the team unless you have a specific reason not to.

Please propose a mission team composed of {party_size} members and provide a message to the other players justifying your choices following the schema provided above.
Phrase your message as if you are a college student, typing informally (e.g., using abbreviations, casual language, and minimal punctuation). Do not use overly formal or structured responses and do not use emojis. Make your response detailed enough to persuade other players but do not be overly verbose. Shorter messages are more effective; don't use more than a few sentences and prefer fewer when possible."""

EVIL_PROPOSAL_TASK = """Your objective is to propose a mission team consisting of {party_size} players.
Consider the following factors when selecting team members:
1. Past involvement and actions of each player
2. Contributions in previous missions
3. Suspicious or trustworthy behaviors

Present your team selection to the other players with a detailed rationale based on past events and player behaviors.
Remember that you are on the evil side - if it is possible, aim to include at least one evil player while maintaining your cover.
However, you will have to justify the proposed team to the other players, so make sure you have a good reason for your choices that makes you look like a good player.
If the good side has already identified an evil player, you should not include them in the team as that would make you look suspicious.
Remember to hide your true identity and appear as good.
It's conventional to include yourself in the team unless you have a specific reason not to.

Please propose a mission team composed of {party_size} members and provide a message to the other players justifying your choices following the schema provided above.
Phrase your message as if you are a college student, typing informally (e.g., using abbreviations, casual language, and minimal punctuation). Do not use overly formal or structured responses and do not use emojis. Make your response detailed enough to persuade other players but do not be overly verbose. Shorter messages are more effective; don't use more than a few sentences and prefer fewer when possible."""

GOOD_DISCUSSION_TASK = """Evaluate the proposed mission team consisting of {party_names}.
Your goal is to ensure no evil or suspicious players are on the team.

Consider:
1. Past involvement and actions of each player
2. Contributions in previous missions
3. Any indications of players being on the evil side
4. Suspicious or trustworthy behaviors
5. The team must consist of {party_size} players

When looking for suspicious behavior, consider whether players are behaving suspiciously or illogically with respect to chat messages or party votes, e.g. always rejecting party votes unless they or another specific player is in it, or making assertions without evidence (especially early in the game such as on Quest 1 where evidence is limited) as these may be signs a player is evil.

Also consider whether their beliefs align with your own, or if their beliefs seem contrary to the group consensus as there are more Servants than Minions and could also suggest a player is evil.

Unless you have a strong reason to doubt a player, it is not always worth arguing for or against specific players, especially early in the game such as on Quest 1.

Provide a clear and logical analysis based on game history and observations.
Your response should be detailed enough to provide insight but concise enough to be easily understood. Try to make concrete suggestions and justify them while hiding your identity and role.
Please keep it relatively short as talking too much can be seen as suspicious. Do not say what your specific role or your task is, and do not repeat your instructions verbatim.
Provide the message you want to send to the other players following the schema provided above.
Phrase your message as if you are a college student, typing informally (e.g., using abbreviations, casual language, and minimal punctuation). Do not use overly formal or structured responses and do not use emojis. Make your response detailed enough to persuade other players but do not be overly verbose. Shorter messages are more effective; don't use more than a few sentences and prefer fewer when possible."""

EVIL_DISCUSSION_TASK = """Evaluate the proposed mission team consisting of {party_names}.
Your goal is to ensure at least one evil player is included while maintaining your cover.

Consider:
1. Past involvement and actions of each player
2. Contributions in previous missions
3. Suspicious or trustworthy behaviors
4. The team must consist of {party_size} players

If the team lacks an evil player, you should generally disapprove.
Provide a clear and logical analysis based on game history and observations.
Your response should be detailed enough to provide insight but concise enough to be easily understood. Try to make concrete suggestions and justify them while hiding your identity and role.

Please keep it relatively short as talking too much can be seen as suspicious. Do not say what your specific role or your task is, and do not repeat your instructions verbatim.
Provide the message you want to send to the other players following the schema provided above.
Phrase your message as if you are a college student, typing informally (e.g., using abbreviations, casual language, and minimal punctuation). Do not use overly formal or structured responses and do not use emojis. Make your response detailed enough to persuade other players but do not be overly verbose. Shorter messages are more effective; don't use more than a few sentences and prefer fewer when possible."""

GOOD_PARTY_VOTE_TASK = """Vote on the proposed mission team consisting of {party_names}.
Your goal is to ensure no evil or suspicious players are on the team.

Note that {rejection_count} party proposals have been rejected. If five proposals are rejected consecutively, the evil side wins. Consider this when voting.

Consider:
1. Past involvement and actions of each player
2. Contributions in previous missions
3. Any indications of players being on the evil side
4. suspicious or trustworthy behaviors

When looking for suspicious behavior, consider whether players are behaving suspiciously or illogically with respect to chat messages or party votes, e.g. always rejecting party votes unless they or another specific player is in it, or making assertions without evidence (especially early in the game such as on Quest 1 where evidence is limited) as these may be signs a player is evil.
Also consider whether their beliefs align with your own, or if their beliefs seem contrary to the group consensus as there are more Servants than Minions and could also suggest a player is evil.
Unless you have a strong reason to doubt a player, it is not always worth arguing for or against specific players, especially early in the game such as on Quest 1. {own_team_note}
Choose either 'approve' or 'disapprove' following the schema provided above."""

EVIL_PARTY_VOTE_TASK = """Vote on the proposed mission team consisting of {party_names}.
Your goal is to ensure at least one evil player is included while maintaining your cover.

Note that {rejection_count} party proposals have been rejected. If five proposals are rejected consecutively, the evil side wins. Consider this when voting.

If the team lacks an evil player, you should generally disapprove. However, be strategic -consecutive rejections could expose the evil team, so sometimes, you may need to approve a team with no evil players to hide your true identity and try again in the next party.

Choose either 'approve' or 'disapprove' following the schema provided above."""

GOOD_QUEST_VOTE_TASK = """You are on a mission team and must decide whether to make it succeed or fail.
As a member of the good team, your goal is to ensure mission success by voting for missions to succeed.
You should always vote for success as a good player as there is no reason for you to fail a quest.

Answer using the schema provided above. If you want the quest to succeed choose 'true'. If you want it to fail choose 'false'."""

EVIL_QUEST_VOTE_TASK = """You are on a mission team and must decide whether to make it succeed or fail.
Your primary objective is to secure victory for the evil side by voting for missions to fail.
Therefore, your default choice should be to fail the mission unless you have a compelling strategic reason to do otherwise.

Answer using the schema provided above. If you want the quest to succeed choose 'true'. If you want it to fail choose 'false'."""

OWN_TEAM_NOTE = "Keep in mind that this is your proposed team and as such you should approve it."


# ---------------------------------------------------------------------------
# View of the game handed to prompt builders


@dataclass
class StateView:
    """Everything a prompt needs, already projected for one seat."""

    self_id: int
    names: Tuple[str, ...] = DEFAULT_PLAYER_NAMES
    round_number: int = 1
    turn_number: int = 0
    beliefs: Mapping[int, float] = field(default_factory=dict)
    chat_lines: Sequence[str] = ()
    quest_summaries: Sequence[str] = ()
    previous_teams: Sequence[str] = ()
    self_actions: Sequence[str] = ()
    leader_id: int = 1
    proposed_party: Tuple[int, ...] = ()
    party_size: int = 2
    rejection_count: int = 0
    is_evil: bool = False
    evil_partners: Tuple[int, ...] = ()

    def name(self, player: int) -> str:
        return self.names[player - 1]

    def party_names(self, party: Optional[Sequence[int]] = None) -> str:
        members = self.proposed_party if party is None else party
        return "[" + ", ".join(self.name(p) for p in sorted(members)) + "]"

    def belief_dict_text(self) -> str:
        entries = []
        for player in range(1, N_PLAYERS + 1):
            value = self.beliefs.get(player, 0.5)
            entries.append(f"'{self.name(player)}': {value:.2f}")
        return "{" + ", ".join(entries) + "}"


def _chat_text(view: StateView) -> str:
    return "\n".join(view.chat_lines) if view.chat_lines else "(no messages yet)"


def _quest_text(view: StateView) -> str:
    if not view.quest_summaries:
        return "- (no quests played yet)"
    return "\n".join(f"- {line}" for line in view.quest_summaries)


def role_block(view: StateView) -> str:
    if view.is_evil:
        evil_lines = ", ".join(f"{view.name(p)}: evil" for p in view.evil_partners)
        return EVIL_ROLE_BLOCK.format(name=view.name(view.self_id), evil_lines=evil_lines)
    return GOOD_ROLE_BLOCK.format(name=view.name(view.self_id))


def belief_state_block(view: StateView) -> str:
    return BELIEF_STATE_BLOCK.format(
        belief_dict=view.belief_dict_text(),
        chat_history=_chat_text(view),
        round_number=view.round_number,
        quest_summaries=_quest_text(view),
    )


def build_prior_prompt(view: StateView) -> str:
    """Rules + role + state + judgment task, in that module order."""
    return "\n\n".join([RULES_BLOCK, role_block(view), belief_state_block(view), PRIOR_TASK])


def build_message_prompt(kind: str, view: StateView) -> str:
    if kind in ("proposal_pitch", "revision"):
        task = PARTY_PROPOSAL_TASK.format(
            party_names=view.party_names(), party_size=view.party_size
        )
    elif kind == "discussion":
        task = DISCUSSION_TASK.format(
            leader_name=view.name(view.leader_id),
            party_names=view.party_names(),
            party_size=view.party_size,
        )
    else:
        raise ValueError(f"unknown message kind: {kind}")
    return "\n\n".join([RULES_BLOCK, role_block(view), belief_state_block(view), task])


def action_state_block(view: StateView) -> str:
    return ACTION_STATE_BLOCK.format(
        self_actions="\n".join(view.self_actions) or "(none)",
        round_number=view.round_number,
        turn_number=view.turn_number,
        rejection_count=view.rejection_count,
        quest_summaries=_quest_text(view),
        leader_name=view.name(view.leader_id),
        party_names=view.party_names() if view.proposed_party else "(none)",
        previous_teams="\n".join(f"- {line}" for line in view.previous_teams) or "- (none)",
        chat_history=_chat_text(view),
    )


def build_action_prompt(kind: str, view: StateView) -> str:
    """Prompts for the chat-driven baseline agent (schema block + task)."""
    evil = view.is_evil
    if kind == "propose":
        schema = PROPOSAL_SCHEMA_BLOCK
        task = (EVIL_PROPOSAL_TASK if evil else GOOD_PROPOSAL_TASK).format(
            party_size=view.party_size
        )
    elif kind == "discussion":
        schema = PROPOSAL_SCHEMA_BLOCK.replace('"party": ["<player name>", ...], ', "")
        task = (EVIL_DISCUSSION_TASK if evil else GOOD_DISCUSSION_TASK).format(
            party_names=view.party_names(), party_size=view.party_size
        )
    elif kind == "party_vote":
        schema = VOTE_SCHEMA_BLOCK
        if evil:
            task = EVIL_PARTY_VOTE_TASK.format(
                party_names=view.party_names(), rejection_count=view.rejection_count
            )
        else:
            own = OWN_TEAM_NOTE if view.leader_id == view.self_id else ""
            task = GOOD_PARTY_VOTE_TASK.format(
                party_names=view.party_names(),
                rejection_count=view.rejection_count,
                own_team_note=own,
            )
    elif kind == "quest_vote":
        schema = QUEST_SCHEMA_BLOCK
        task = EVIL_QUEST_VOTE_TASK if evil else GOOD_QUEST_VOTE_TASK
    else:
        raise ValueError(f"unknown action kind: {kind}")
    return "\n\n".join(
        [RULES_BLOCK, role_block(view), action_state_block(view), schema, task]
    )


# ---------------------------------------------------------------------------
# Judgments and priors


@dataclass(frozen=True)
class PriorJudgment:
    """Per-player qualitative delta; always covers all six players."""

    deltas: Mapping[int, str]

    def __post_init__(self) -> None:
        if sorted(self.deltas) != list(range(1, N_PLAYERS + 1)):
            raise ValueError("judgment must cover players 1..6 exactly")
        for token in self.deltas.values():
            if token not in _TOKENS:
                raise ValueError(f"invalid judgment token: {token}")

    @classmethod
    def all_same(cls) -> "PriorJudgment":
        return cls({p: SAME for p in range(1, N_PLAYERS + 1)})


_PAIR_RE = re.compile(
    r"['\"]?([A-Za-z][\w ]*?)['\"]?\s*[:=]\s*['\"]?(increase|decrease|same|higher|lower)['\"]?",
    re.IGNORECASE,
)


def parse_judgment(raw: str, names: Sequence[str] = DEFAULT_PLAYER_NAMES) -> PriorJudgment:
    """Best-effort extraction of a name -> token map; never raises.

    Accepts JSON, Python-literal dicts, or loose "Name: increase" pairs in
    surrounding prose.  Unknown names are dropped, missing names default to
    same, and anything unparseable yields the all-same judgment.
    """
    name_to_id = {name.lower(): i + 1 for i, name in enumerate(names)}
    deltas = {p: SAME for p in range(1, N_PLAYERS + 1)}
    found = False
    candidates: list[Mapping[str, str]] = []
    text = raw or ""
    brace = re.search(r"\{[^{}]*\}", text, re.DOTALL)
    if brace:
        blob = brace.group(0)
        for loader in (json.loads, ast.literal_eval):
            try:
                parsed = loader(blob)
                if isinstance(parsed, dict):
                    candidates.append(parsed)
                    break
            except (ValueError, SyntaxError):
                continue
    if not candidates:
        pairs = {m.group(1): m.group(2) for m in _PAIR_RE.finditer(text)}
        if pairs:
            candidates.append(pairs)
    for mapping in candidates:
        for key, value in mapping.items():
            if not isinstance(key, str) or not isinstance(value, str):
                continue
            player = name_to_id.get(key.strip().lower())
            if player is None:
                continue  # not one of the six seats
            token = value.strip().lower()
            if token in ("increase", HIGHER):
                deltas[player] = HIGHER
                found = True
            elif token in ("decrease", LOWER):
                deltas[player] = LOWER
                found = True
            elif token == SAME:
                deltas[player] = SAME
                found = True
    if not found and text.strip():
        logger.warning("judgment parse failure; defaulting to all-same: %r", text[:200])
    return PriorJudgment(deltas)


def to_prior(judgment: PriorJudgment, beta: float) -> list[float]:
    """The fixed token-to-probability rule; exact, no rounding tricks."""
    if not 0.0 <= beta < 0.5:
        raise ValueError(f"beta must lie in [0, 0.5), got {beta}")
    mapping = {HIGHER: 0.5 + beta, LOWER: 0.5 - beta, SAME: 0.5}
    return [mapping[judgment.deltas[p]] for p in range(1, N_PLAYERS + 1)]


@dataclass(frozen=True)
class BetaSchedule:
    values: Tuple[float, ...] = DEFAULT_BETA_SCHEDULE

    def __post_init__(self) -> None:
        if len(self.values) != N_QUESTS:
            raise ValueError(f"schedule needs {N_QUESTS} values")
        for v in self.values:
            if not 0.0 <= v < 0.5:
                raise ValueError(f"beta {v} outside [0, 0.5)")
        if any(b > a for a, b in zip(self.values[1:], self.values)):
            raise ValueError("beta schedule must be non-decreasing")

    @classmethod
    def constant(cls, beta: float) -> "BetaSchedule":
        return cls(tuple([beta] * N_QUESTS))

    def for_round(self, round_number: int) -> float:
        return self.values[round_number - 1]


# ---------------------------------------------------------------------------
# Providers


class ProviderError(RuntimeError):
    """Typed failure after retries are exhausted (callers fall back)."""


@dataclass
class ProviderUsage:
    input_tokens: int = 0
    output_tokens: int = 0
    latency: float = 0.0

    def __post_init__(self) -> None:
        if self.input_tokens < 0 or self.output_tokens < 0 or self.latency < 0:
            raise ValueError("usage counters must be nonnegative")


@dataclass
class ProviderExchange:
    prompt: str
    response: str
    usage: ProviderUsage


def _approx_tokens(text: str) -> int:
    return len(text.split())


class ChatProvider:
    """Base class: subclasses implement _call_impl; call() records usage."""

    def __init__(self) -> None:
        self.transcript: list[ProviderExchange] = []
        self._lock = threading.Lock()

    def call(self, prompt: str, params: Optional[dict] = None) -> Tuple[str, ProviderUsage]:
        text, usage = self._call_impl(prompt, params or {})
        with self._lock:
            self.transcript.append(ProviderExchange(prompt, text, usage))
        return text, usage

    def _call_impl(self, prompt: str, params: dict) -> Tuple[str, ProviderUsage]:
        raise NotImplementedError

    def total_usage(self) -> ProviderUsage:
        with self._lock:
            return ProviderUsage(
                input_tokens=sum(e.usage.input_tokens for e in self.transcript),
                output_tokens=sum(e.usage.output_tokens for e in self.transcript),
                latency=sum(e.usage.latency for e in self.transcript),
            )


def prompt_key(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class HttpProvider(ChatProvider):
    """Chat-completion endpoint client with exponential-backoff retries.

    The API key is read from the environment (never stored in configs);
    transport and sleep are injectable so failure paths are testable.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key_env: str = "AVALONSIM_API_KEY",
        timeout: float = 30.0,
        max_retries: int = 3,
        backoff_base: float = 0.5,
        transport: Optional[httpx.BaseTransport] = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        super().__init__()
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self._sleep = sleep
        self._client = httpx.Client(transport=transport, timeout=timeout)

    def close(self) -> None:
        self._client.close()

    def _call_impl(self, prompt: str, params: dict) -> Tuple[str, ProviderUsage]:
        api_key = os.environ.get(self.api_key_env, "")
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.get("temperature", 0.7),
        }
        if "max_tokens" in params:
            body["max_tokens"] = params["max_tokens"]
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        last_error: Optional[str] = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                self._sleep(self.backoff_base * (2 ** (attempt - 1)))
            started = time.monotonic()
            try:
                response = self._client.post(
                    f"{self.base_url}/chat/completions", json=body, headers=headers
                )
            except httpx.HTTPError as exc:
                last_error = f"transport error: {exc}"
                logger.warning("provider attempt %d failed: %s", attempt + 1, last_error)
                continue
            elapsed = time.monotonic() - started
            if response.status_code == 429 or response.status_code >= 500:
                last_error = f"HTTP {response.status_code}"
                logger.warning("provider attempt %d failed: %s", attempt + 1, last_error)
                continue
            if response.status_code != 200:
                raise ProviderError(f"provider rejected request: HTTP {response.status_code}")
            payload = response.json()
            try:
                text = payload["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError) as exc:
                raise ProviderError(f"malformed provider response: {exc}") from exc
            usage_raw = payload.get("usage", {})
            usage = ProviderUsage(
                input_tokens=int(usage_raw.get("prompt_tokens", _approx_tokens(prompt))),
                output_tokens=int(usage_raw.get("completion_tokens", _approx_tokens(text))),
                latency=elapsed,
            )
            return text, usage
        raise ProviderError(f"retries exhausted: {last_error}")


class FixtureProvider(ChatProvider):
    """Replays recorded responses keyed by the prompt's content hash."""

    def __init__(self, directory) -> None:
        super().__init__()
        self.directory = Path(directory)

    def _call_impl(self, prompt: str, params: dict) -> Tuple[str, ProviderUsage]:
        path = self.directory / f"{prompt_key(prompt)}.txt"
        if not path.exists():
            raise ProviderError(f"no fixture for prompt hash {prompt_key(prompt)[:12]}")
        text = path.read_text(encoding="utf-8")
        usage = ProviderUsage(
            input_tokens=_approx_tokens(prompt),
            output_tokens=_approx_tokens(text),
            latency=0.0,
        )
        return text, usage


class RecordingProvider(ChatProvider):
    """Wraps a live provider and writes fixture files as it goes."""

    def __init__(self, inner: ChatProvider, directory) -> None:
        super().__init__()
        self.inner = inner
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _call_impl(self, prompt: str, params: dict) -> Tuple[str, ProviderUsage]:
        text, usage = self.inner.call(prompt, params)
        (self.directory / f"{prompt_key(prompt)}.txt").write_text(text, encoding="utf-8")
        return text, usage


class ScriptedProvider(ChatProvider):
    """Deterministic provider for tests: a response function or a queue."""

    def __init__(
        self,
        responses: Optional[Iterable[str]] = None,
        respond: Optional[Callable[[str], str]] = None,
    ) -> None:
        super().__init__()
        self._queue = list(responses or [])
        self._respond = respond

    def _call_impl(self, prompt: str, params: dict) -> Tuple[str, ProviderUsage]:
        if self._respond is not None:
            text = self._respond(prompt)
        elif self._queue:
            text = self._queue.pop(0)
        else:
            raise ProviderError("scripted provider has no response left")
        usage = ProviderUsage(
            input_tokens=_approx_tokens(prompt),
            output_tokens=_approx_tokens(text),
            latency=0.0,
        )
        return text, usage


# ---------------------------------------------------------------------------
# High-level helpers


def extract_message(raw: str) -> Optional[str]:
    """Pull the 'message' value out of a structured reply, if any."""
    text = raw or ""
    brace = re.search(r"\{.*\}", text, re.DOTALL)
    if brace:
        for loader in (json.loads, ast.literal_eval):
            try:
                parsed = loader(brace.group(0))
                if isinstance(parsed, dict) and isinstance(parsed.get("message"), str):
                    return parsed["message"]
            except (ValueError, SyntaxError):
                continue
    match = re.search(r"['\"]message['\"]\s*:\s*[\"'](.+?)[\"']\s*[,}]", text, re.DOTALL)
    if match:
        return match.group(1)
    return None


def generate_message(kind: str, view: StateView, provider: ChatProvider) -> str:
    """One provider call; any failure falls back to a canned line."""
    prompt = build_message_prompt(kind, view)
    try:
        raw, _ = provider.call(prompt)
    except ProviderError as exc:
        logger.warning("message generation failed (%s); using fallback", exc)
        return FALLBACK_MESSAGES[kind]
    message = extract_message(raw)
    if message is None:
        logger.warning("unparseable message payload; using fallback: %r", raw[:200])
        return FALLBACK_MESSAGES[kind]
    return message.strip()


def judge_priors(view: StateView, provider: ChatProvider) -> PriorJudgment:
    """One provider call; any failure degrades to the all-same judgment."""
    prompt = build_prior_prompt(view)
    try:
        raw, _ = provider.call(prompt)
    except ProviderError as exc:
        logger.warning("prior extraction failed (%s); keeping beliefs", exc)
        return PriorJudgment.all_same()
    return parse_judgment(raw, view.names)
