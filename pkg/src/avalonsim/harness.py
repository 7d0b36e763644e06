"""Batch experiment harness: matchups, corpora, benchmarks, trace export."""

from __future__ import annotations

import csv
import gc
import math
import random
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .agents import Agent, BeliefAgent, RandomAgent, ScriptedEvilAgent
from .game import N_PLAYERS, GameRecord, Role, write_records
from .inference import BPConfig, build_role_graph, run_max_product
from .runner import InvalidGameError, play_game

# (player_id, role, seed) -> Agent
AgentFactory = Callable[[int, Role, int], Agent]


@dataclass(frozen=True)
class Matchup:
    """Four Good seats against two Evil seats; factories build each side."""

    good: AgentFactory
    evil: AgentFactory
    label: str = "matchup"


def random_good_factory() -> AgentFactory:
    return lambda player, role, seed: RandomAgent(player, seed=seed)


def random_evil_factory(fail_prob: float = 1.0) -> AgentFactory:
    return lambda player, role, seed: RandomAgent(player, seed=seed, evil_fail_prob=fail_prob)


def scripted_evil_factory(
    fail_prob: float = 1.0,
    reject_good_prob: float = 1.0,
    deceive_prob: float = 0.0,
    fail_from_quest: int = 1,
) -> AgentFactory:
    return lambda player, role, seed: ScriptedEvilAgent(
        player,
        seed=seed,
        fail_prob=fail_prob,
        reject_good_prob=reject_good_prob,
        deceive_prob=deceive_prob,
        fail_from_quest=fail_from_quest,
    )


def belief_agent_factory(
    factor_fn,
    provider_factory: Optional[Callable[[], object]] = None,
    beta_schedule=None,
    bp_config: Optional[BPConfig] = None,
) -> AgentFactory:
    def build(player: int, role: Role, seed: int) -> Agent:
        provider = provider_factory() if provider_factory is not None else None
        return BeliefAgent(
            player,
            factor_fn,
            seed=seed,
            provider=provider,
            beta_schedule=beta_schedule,
            bp_config=bp_config,
        )

    return build


@dataclass
class MetricsReport:
    label: str
    n_games: int
    invalid_games: int
    good_wins: int
    evil_wins: int
    mean_completed_quests: float

    @property
    def valid_games(self) -> int:
        return self.n_games - self.invalid_games

    @property
    def good_win_rate(self) -> float:
        return self.good_wins / self.valid_games if self.valid_games else 0.0

    @property
    def evil_win_rate(self) -> float:
        return self.evil_wins / self.valid_games if self.valid_games else 0.0

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "n_games": self.n_games,
            "invalid_games": self.invalid_games,
            "good_wins": self.good_wins,
            "evil_wins": self.evil_wins,
            "good_win_rate": self.good_win_rate,
            "evil_win_rate": self.evil_win_rate,
            "mean_completed_quests": self.mean_completed_quests,
        }


def _draw_roles(game_seed: int) -> dict[int, Role]:
    # Mirrors the engine's own role draw so factories can see seats up front.
    evil = set(random.Random(game_seed).sample(range(1, N_PLAYERS + 1), 2))
    return {p: (Role.EVIL if p in evil else Role.GOOD) for p in range(1, N_PLAYERS + 1)}


def run_matchup(
    matchup: Matchup,
    n_games: int,
    seed: int = 0,
    chat: bool = False,
    collect_beliefs: bool = False,
) -> Tuple[MetricsReport, list[GameRecord]]:
    """Play n_games with fresh agents per game; invalid games are excluded
    from the metrics but counted."""
    master = random.Random(seed)
    logs: list[GameRecord] = []
    invalid = 0
    good_wins = 0
    quests_total = 0
    for _ in range(n_games):
        game_seed = master.getrandbits(32)
        roles = _draw_roles(game_seed)
        agents = {}
        for player in range(1, N_PLAYERS + 1):
            agent_seed = master.getrandbits(32)
            factory = matchup.evil if roles[player] is Role.EVIL else matchup.good
            agents[player] = factory(player, roles[player], agent_seed)
        try:
            record = play_game(
                agents,
                game_seed,
                role_assignment=roles,
                chat=chat,
                collect_beliefs=collect_beliefs,
            )
        except InvalidGameError:
            invalid += 1
            continue
        logs.append(record)
        if record.winner == Role.GOOD.value:
            good_wins += 1
        quests_total += sum(1 for q in record.quests if q["outcome"] != "unplayed")
    valid = len(logs)
    report = MetricsReport(
        label=matchup.label,
        n_games=n_games,
        invalid_games=invalid,
        good_wins=good_wins,
        evil_wins=valid - good_wins,
        mean_completed_quests=quests_total / valid if valid else 0.0,
    )
    return report, logs


def voting_f1(logs: Sequence[GameRecord], round_number: int) -> Tuple[float, float]:
    """Score party ballots in one round as Evil detectors.

    A rejection predicts "this party contains an Evil player".  Returns the
    pooled F1 over every ballot in that round plus the standard error of the
    per-game F1 scores.
    """
    if not 1 <= round_number <= 5:
        raise ValueError("round_number must be in 1..5")
    tp = fp = fn = 0
    per_game: list[float] = []
    for record in logs:
        evil = set(record.evil_players())
        g_tp = g_fp = g_fn = 0
        for proposal in record.proposals:
            if proposal["quest"] != round_number or proposal.get("votes") is None:
                continue
            has_evil = bool(set(proposal["party"]) & evil)
            for _, vote in proposal["votes"].items():
                predicted_evil = vote == "reject"
                if predicted_evil and has_evil:
                    g_tp += 1
                elif predicted_evil and not has_evil:
                    g_fp += 1
                elif not predicted_evil and has_evil:
                    g_fn += 1
        if g_tp + g_fp + g_fn == 0 and not any(
            p["quest"] == round_number and p.get("votes") is not None
            for p in record.proposals
        ):
            continue  # game never reached this round
        tp += g_tp
        fp += g_fp
        fn += g_fn
        denom = 2 * g_tp + g_fp + g_fn
        per_game.append(2 * g_tp / denom if denom else 1.0)
    if not per_game:
        raise ValueError(f"no ballots found for round {round_number}")
    denom = 2 * tp + fp + fn
    f1 = 2 * tp / denom if denom else 1.0
    stderr = float(np.std(per_game, ddof=1) / math.sqrt(len(per_game))) if len(per_game) > 1 else 0.0
    return f1, stderr


def _param_draw(rng: random.Random, value) -> float:
    if isinstance(value, (tuple, list)):
        lo, hi = value
        return rng.uniform(float(lo), float(hi))
    return float(value)


DEFAULT_EVIL_POLICY_PARAMS = {
    "fail_prob": (0.25, 1.0),
    "reject_good_prob": (0.0, 1.0),
    # Extra per-game regime knobs; the diversity keeps small corpora from
    # covering every behavior pattern.
    "deceive_prob": (0.0, 0.6),
    "fail_from_quest": (1, 1, 1, 2, 3),
    # Fraction of games whose Evil seats play the random policy instead of
    # the scripted one.
    "random_evil_fraction": 0.25,
    # Good-seat ballot regime, drawn per game.
    "good_approve_prob": (0.3, 0.7),
    "good_self_bias": (0.0, 0.4),
}


def generate_synthetic_corpus(
    n_games: int,
    evil_policy_params: Optional[dict] = None,
    seed: int = 0,
    path: Optional[str] = None,
) -> list[GameRecord]:
    """Self-play corpus for factor training: random Good seats against
    scripted Evil whose knobs are jittered per game (a range means uniform
    draw, a scalar means fixed).  Written as JSONL with a header line when
    a path is given."""
    params = dict(DEFAULT_EVIL_POLICY_PARAMS)
    if evil_policy_params:
        params.update(evil_policy_params)
    master = random.Random(seed)
    records: list[GameRecord] = []
    invalid = 0
    for _ in range(n_games):
        game_seed = master.getrandbits(32)
        fail_prob = _param_draw(master, params["fail_prob"])
        reject_prob = _param_draw(master, params["reject_good_prob"])
        deceive_prob = _param_draw(master, params.get("deceive_prob", 0.0))
        fail_from = params.get("fail_from_quest", 1)
        if isinstance(fail_from, (tuple, list)):
            fail_from = master.choice(fail_from)
        random_evil = master.random() < float(params.get("random_evil_fraction", 0.0))
        approve_prob = _param_draw(master, params.get("good_approve_prob", 0.5))
        self_bias = _param_draw(master, params.get("good_self_bias", 0.0))
        roles = _draw_roles(game_seed)
        agents: dict[int, Agent] = {}
        for player in range(1, N_PLAYERS + 1):
            agent_seed = master.getrandbits(32)
            if roles[player] is not Role.EVIL:
                agents[player] = RandomAgent(
                    player,
                    seed=agent_seed,
                    party_approve_prob=approve_prob,
                    self_bias=self_bias,
                )
            elif random_evil:
                agents[player] = RandomAgent(player, seed=agent_seed, evil_fail_prob=fail_prob)
            else:
                agents[player] = ScriptedEvilAgent(
                    player,
                    seed=agent_seed,
                    fail_prob=fail_prob,
                    reject_good_prob=reject_prob,
                    deceive_prob=deceive_prob,
                    fail_from_quest=int(fail_from),
                )
        try:
            record = play_game(
                agents, game_seed, role_assignment=roles, chat=False, collect_beliefs=False
            )
        except InvalidGameError:
            invalid += 1
            continue
        records.append(record)
    if path is not None:
        header = {
            "type": "header",
            "format": "avalonsim-games-v1",
            "n_games": len(records),
            "invalid_games": invalid,
            "seed": seed,
            "evil_policy_params": {k: list(v) if isinstance(v, (tuple, list)) else v for k, v in params.items()},
        }
        write_records(path, records, header=header)
    return records


def scalability_bench(
    role_counts: Sequence[int] = (6, 8, 12, 20),
    trials: int = 20,
    seed: int = 0,
) -> list[dict]:
    """Time the inference call alone on random role graphs of growing size.

    Evil count scales as ceil(n/3).  Graph construction happens outside the
    timed region; each trial times exactly one run_max_product call.  Trials
    interleave across sizes so a transient stall (page fault, host jitter)
    spreads over every size instead of skewing one block; each size gets one
    untimed warmup, and the collector is paused while timing, the same
    convention timeit uses."""
    for n in role_counts:
        if n < 3:
            raise ValueError("role counts below 3 are not benchmarkable")
    rng = np.random.default_rng(seed)
    config = BPConfig()

    def fresh_graph(n: int):
        probs = rng.uniform(0.05, 0.95, size=n).tolist()
        return build_role_graph(probs, n_evil=math.ceil(n / 3))

    for n in role_counts:
        run_max_product(fresh_graph(n), config)
    times: dict = {n: [] for n in role_counts}
    gc_was_on = gc.isenabled()
    gc.disable()
    try:
        for _ in range(trials):
            for n in role_counts:
                graph = fresh_graph(n)
                start = time.perf_counter()
                run_max_product(graph, config)
                times[n].append(time.perf_counter() - start)
    finally:
        if gc_was_on:
            gc.enable()
    return [
        {
            "n_roles": int(n),
            "trials": int(trials),
            "mean_seconds": float(np.mean(times[n])),
            "min_seconds": float(np.min(times[n])),
            "times": [float(t) for t in times[n]],
        }
        for n in role_counts
    ]


BELIEF_TRACE_COLUMNS = (
    "game",
    "round",
    "player",
    "true_role",
    "belief_with_prior",
    "belief_without_prior",
)


def export_belief_traces(logs: Sequence[GameRecord], path: str) -> int:
    """Flatten per-quest belief snapshots to CSV, one row per judged player.

    Uses the lowest-numbered tracked seat of each game as the observer.
    Raises if any game lacks snapshots (they must be recorded at play time).
    """
    rows = 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(BELIEF_TRACE_COLUMNS)
        for game_index, record in enumerate(logs):
            if not record.beliefs:
                raise ValueError(
                    f"game {game_index} has no belief snapshots; "
                    "replay it with belief collection enabled"
                )
            observer = min(snap["observer"] for snap in record.beliefs)
            for snap in record.beliefs:
                if snap["observer"] != observer:
                    continue
                for player in range(1, N_PLAYERS + 1):
                    writer.writerow(
                        [
                            game_index,
                            snap["round"],
                            player,
                            record.roles[player],
                            snap["with_prior"][player - 1],
                            snap["without_prior"][player - 1],
                        ]
                    )
                    rows += 1
    return rows
