"""Max-product belief propagation over hidden-role factor graphs.

The graph for a six-player game has one binary variable per player (0 Good,
1 Evil), a hard exactly-two-Evil constraint factor, one conditional factor
per player carrying p(evil | observed history), and one unary prior factor
per player.  Observed state variables are clamped, which cuts every loop
through them: their effect is absorbed into the conditional factors at
build time, so message passing runs on the star around the constraint.

Messages follow a fixed asynchronous schedule (all variable-to-factor edges
in variable order, then all factor-to-variable edges) with per-message
normalization.  Beliefs are max-marginals; iteration stops when the summed
KL divergence between successive belief snapshots drops below epsilon or
after max_iterations sweeps, whichever is first.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np

from .codec import STATE_VARIABLE_SPECS, EncodedState
from .game import N_EVIL, N_PLAYERS

PROB_FLOOR = 1e-6  # conditional factor outputs live in [1e-6, 1 - 1e-6]
KL_FLOOR = 1e-12
_LOG_ZERO = -1e30  # sentinel for log(0); keeps arithmetic finite

# p(r_j = evil | encoded observation) for every player, given one encoding
ConditionalFactorProvider = Callable[[EncodedState], Sequence[float]]


class InferenceError(RuntimeError):
    """Degenerate message or belief (all-zero or NaN) during propagation."""


@dataclass
class Variable:
    name: str
    cardinality: int
    evidence: Optional[int] = None  # clamped value, or None if free

    def indicator(self) -> Optional[np.ndarray]:
        if self.evidence is None:
            return None
        vec = np.zeros(self.cardinality)
        vec[self.evidence] = 1.0
        return vec


class Factor:
    """A nonnegative function over an ordered tuple of variables."""

    name: str
    variables: Tuple[str, ...]

    def message_to(self, target: str, incoming: Mapping[str, np.ndarray]) -> np.ndarray:
        raise NotImplementedError


class TableFactor(Factor):
    def __init__(
        self,
        name: str,
        variables: Sequence[str],
        table: np.ndarray,
        conditioned_on: Sequence[str] = (),
    ) -> None:
        self.name = name
        self.variables = tuple(variables)
        self.table = np.asarray(table, dtype=float)
        if self.table.ndim != len(self.variables):
            raise ValueError(f"factor {name}: table rank != number of variables")
        if np.any(self.table < 0) or not np.all(np.isfinite(self.table)):
            raise ValueError(f"factor {name}: table entries must be finite and >= 0")
        # Evidence absorbed at build time still counts as graph structure:
        # these are the clamped variables the table was evaluated against.
        self.conditioned_on = tuple(conditioned_on)

    def message_to(self, target: str, incoming: Mapping[str, np.ndarray]) -> np.ndarray:
        axis = self.variables.index(target)
        tmp = self.table
        for i, var in enumerate(self.variables):
            if i == axis:
                continue
            msg = incoming[var]
            shape = [1] * tmp.ndim
            shape[i] = msg.shape[0]
            tmp = tmp * msg.reshape(shape)
        other_axes = tuple(i for i in range(tmp.ndim) if i != axis)
        return tmp.max(axis=other_axes) if other_axes else tmp.astype(float, copy=True)


class ExactlyKFactor(Factor):
    """Hard constraint: exactly k of the attached binary variables are 1.

    Outgoing max-product messages for all n variables are computed together
    in O(n log n): in the log domain each neighbor contributes log mu(0)
    plus, if selected, delta = log mu(1) - log mu(0), so the best completion
    picks the largest deltas; one sort plus prefix sums serves every target
    via an exclude-self adjustment.
    """

    def __init__(self, name: str, variables: Sequence[str], k: int) -> None:
        self.name = name
        self.variables = tuple(variables)
        self.k = int(k)
        if not 0 <= self.k <= len(self.variables):
            raise ValueError(f"factor {name}: k={k} infeasible for {len(self.variables)} variables")

    def _logs(self, incoming: Mapping[str, np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
        mus = np.stack([incoming[v] for v in self.variables])
        if mus.shape[1] != 2:
            raise ValueError(f"factor {self.name}: constraint variables must be binary")
        with np.errstate(divide="ignore"):
            logs = np.log(mus)
        logs[np.isneginf(logs)] = _LOG_ZERO
        return logs[:, 0], logs[:, 1]

    def messages_all(self, incoming: Mapping[str, np.ndarray]) -> Dict[str, np.ndarray]:
        l0, l1 = self._logs(incoming)
        n = len(self.variables)
        delta = l1 - l0
        order = np.argsort(-delta, kind="stable")
        rank = np.empty(n, dtype=int)
        rank[order] = np.arange(n)
        prefix = np.concatenate(([0.0], np.cumsum(delta[order])))
        total_l0 = l0.sum()

        def best_sum_excluding(t: int, i: int) -> float:
            # largest t deltas among all variables except i
            if t < 0 or t > n - 1:
                return _LOG_ZERO
            if t == 0:
                return 0.0
            if rank[i] < t:
                return prefix[t + 1] - delta[i]
            return prefix[t]

        out: Dict[str, np.ndarray] = {}
        for i, var in enumerate(self.variables):
            base = total_l0 - l0[i]
            log_m0 = base + best_sum_excluding(self.k, i)
            log_m1 = base + best_sum_excluding(self.k - 1, i)
            shift = max(log_m0, log_m1)
            if shift <= _LOG_ZERO / 2:
                raise InferenceError(
                    f"constraint {self.name}: no feasible completion for {var}"
                )
            out[var] = np.array(
                [math.exp(log_m0 - shift), math.exp(log_m1 - shift)]
            )
        return out

    def message_to(self, target: str, incoming: Mapping[str, np.ndarray]) -> np.ndarray:
        return self.messages_all(incoming)[target]


class FactorGraph:
    def __init__(self) -> None:
        self.variables: Dict[str, Variable] = {}
        self.var_order: list[str] = []
        self.factors: list[Factor] = []
        self.role_order: Tuple[str, ...] = ()
        self.self_index: Optional[int] = None
        self._adjacency: Dict[str, list[int]] = {}

    def add_variable(self, name: str, cardinality: int, evidence: Optional[int] = None) -> None:
        if name in self.variables:
            raise ValueError(f"duplicate variable {name}")
        if evidence is not None and not 0 <= evidence < cardinality:
            raise ValueError(f"evidence {evidence} out of range for {name}")
        self.variables[name] = Variable(name, cardinality, evidence)
        self.var_order.append(name)
        self._adjacency[name] = []

    def add_factor(self, factor: Factor) -> None:
        for var in factor.variables:
            if var not in self.variables:
                raise ValueError(f"factor {factor.name} references unknown variable {var}")
        index = len(self.factors)
        self.factors.append(factor)
        for var in factor.variables:
            self._adjacency[var].append(index)

    def factors_of(self, name: str) -> list[int]:
        return list(self._adjacency[name])

    def degree(self, name: str) -> int:
        return len(self._adjacency[name])


@dataclass
class BPConfig:
    max_iterations: int = 20
    epsilon: float = 1e-6

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")


@dataclass
class BeliefVector:
    """Normalized Evil max-marginals plus run diagnostics."""

    b: np.ndarray  # b[j] = belief that role variable j is Evil
    self_index: Optional[int] = None
    iterations: int = 0
    converged: bool = False
    kl_trace: list[float] = field(default_factory=list)
    beliefs: Dict[str, np.ndarray] = field(default_factory=dict)
    map_assignment: Dict[str, int] = field(default_factory=dict)


def kl_total(beliefs_prev, beliefs_curr) -> float:
    """Sum over distributions of sum_s prev(s) (log prev(s) - log curr(s)).

    Accepts two parallel mappings of distributions or two single
    distributions; entries are floored at 1e-12 before the logs.
    """
    if isinstance(beliefs_prev, Mapping):
        keys = beliefs_prev.keys()
        if keys != beliefs_curr.keys():
            raise ValueError("belief snapshots cover different variables")
        return float(
            sum(kl_total(beliefs_prev[k], beliefs_curr[k]) for k in keys)
        )
    prev = np.maximum(np.asarray(beliefs_prev, dtype=float), KL_FLOOR)
    curr = np.maximum(np.asarray(beliefs_curr, dtype=float), KL_FLOOR)
    if prev.shape != curr.shape:
        raise ValueError("belief shapes differ")
    return float(np.sum(prev * (np.log(prev) - np.log(curr))))


def _normalize(vec: np.ndarray, context: str) -> np.ndarray:
    if not np.all(np.isfinite(vec)):
        raise InferenceError(f"non-finite message at {context}")
    total = vec.sum()
    if total <= 0.0:
        raise InferenceError(f"all-zero message at {context}")
    return vec / total


def _prior_table(p_evil: float) -> np.ndarray:
    return np.array([1.0 - p_evil, p_evil])


def run_max_product(
    graph: FactorGraph,
    config: Optional[BPConfig] = None,
    priors: Optional[Sequence[float]] = None,
) -> BeliefVector:
    """Run max-product BP to a fixed point; pure in all inputs.

    ``priors`` optionally supplies p(evil) per role variable for this run
    without mutating the graph; it acts as an extra unary factor and as the
    initial outgoing message of each role variable.
    """
    cfg = config or BPConfig()
    runtime_prior: Dict[str, np.ndarray] = {}
    if priors is not None:
        if len(priors) != len(graph.role_order):
            raise ValueError(
                f"got {len(priors)} priors for {len(graph.role_order)} role variables"
            )
        for name, p in zip(graph.role_order, priors):
            if not 0.0 < float(p) < 1.0:
                raise ValueError(f"prior for {name} must lie in (0,1), got {p}")
            runtime_prior[name] = _prior_table(float(p))

    def unary_base(name: str) -> np.ndarray:
        var = graph.variables[name]
        vec = np.ones(var.cardinality)
        indicator = var.indicator()
        if indicator is not None:
            vec = vec * indicator
        if name in runtime_prior:
            vec = vec * runtime_prior[name]
        return vec

    # Message state, keyed by directed edge.
    v2f: Dict[Tuple[str, int], np.ndarray] = {}
    f2v: Dict[Tuple[int, str], np.ndarray] = {}
    for name in graph.var_order:
        init = _normalize(unary_base(name), f"init {name}")
        for fi in graph.factors_of(name):
            v2f[(name, fi)] = init
    for fi, factor in enumerate(graph.factors):
        for name in factor.variables:
            card = graph.variables[name].cardinality
            f2v[(fi, name)] = np.full(card, 1.0 / card)

    def compute_beliefs() -> Dict[str, np.ndarray]:
        snapshot: Dict[str, np.ndarray] = {}
        for name in graph.var_order:
            vec = unary_base(name)
            for fi in graph.factors_of(name):
                vec = vec * f2v[(fi, name)]
            snapshot[name] = _normalize(vec, f"belief {name}")
        return snapshot

    beliefs = compute_beliefs()
    kl_trace: list[float] = []
    iterations = 0
    converged = False

    for iteration in range(1, cfg.max_iterations + 1):
        iterations = iteration
        # Sweep 1: variable-to-factor edges in (variable, factor) order.
        for name in graph.var_order:
            adjacent = graph.factors_of(name)
            for fi in adjacent:
                vec = unary_base(name)
                for fj in adjacent:
                    if fj != fi:
                        vec = vec * f2v[(fj, name)]
                v2f[(name, fi)] = _normalize(vec, f"{name}->{graph.factors[fi].name}")
        # Sweep 2: factor-to-variable edges in (factor, variable) order.
        for fi, factor in enumerate(graph.factors):
            incoming = {v: v2f[(v, fi)] for v in factor.variables}
            if isinstance(factor, ExactlyKFactor):
                fresh = factor.messages_all(incoming)
                for v in factor.variables:
                    f2v[(fi, v)] = _normalize(fresh[v], f"{factor.name}->{v}")
            else:
                for v in factor.variables:
                    msg = factor.message_to(v, incoming)
                    f2v[(fi, v)] = _normalize(msg, f"{factor.name}->{v}")

        previous, beliefs = beliefs, compute_beliefs()
        kl = kl_total(previous, beliefs)
        kl_trace.append(kl)
        if kl < cfg.epsilon:
            converged = True
            break

    map_assignment = {name: int(np.argmax(dist)) for name, dist in beliefs.items()}
    b = np.array([beliefs[name][1] for name in graph.role_order])
    return BeliefVector(
        b=b,
        self_index=graph.self_index,
        iterations=iterations,
        converged=converged,
        kl_trace=kl_trace,
        beliefs=beliefs,
        map_assignment=map_assignment,
    )


# ---------------------------------------------------------------------------
# Graph builders


def _checked_probability(p: float, who: str) -> float:
    p = float(p)
    if not 0.0 < p < 1.0:
        raise ValueError(f"conditional factor for {who} must lie in (0,1), got {p}")
    return min(max(p, PROB_FLOOR), 1.0 - PROB_FLOOR)


def build_role_graph(
    evil_probabilities: Sequence[float],
    n_evil: int = N_EVIL,
    priors: Optional[Sequence[float]] = None,
    self_index: Optional[int] = None,
    include_constraint: bool = True,
) -> FactorGraph:
    """Star-shaped role graph for any player count (used raw by benchmarks).

    evil_probabilities[j] is the conditional factor's p(evil) for player
    j+1, already conditioned on whatever that caller observed.
    """
    n = len(evil_probabilities)
    graph = FactorGraph()
    names = [f"r{j + 1}" for j in range(n)]
    graph.role_order = tuple(names)
    graph.self_index = self_index
    for j, name in enumerate(names):
        evidence = 0 if (self_index is not None and self_index == j + 1) else None
        graph.add_variable(name, 2, evidence=evidence)
    for j, name in enumerate(names):
        p = _checked_probability(evil_probabilities[j], name)
        graph.add_factor(TableFactor(f"cond_{name}", (name,), _prior_table(p)))
    for j, name in enumerate(names):
        prior = 0.5 if priors is None else float(priors[j])
        if not 0.0 < prior < 1.0:
            raise ValueError(f"prior for {name} must lie in (0,1), got {prior}")
        graph.add_factor(TableFactor(f"prior_{name}", (name,), _prior_table(prior)))
    if include_constraint:
        graph.add_factor(ExactlyKFactor("evil_count", tuple(names), n_evil))
    return graph


def build_graph(
    encoded: EncodedState,
    self_player: Optional[int],
    factor_fn: ConditionalFactorProvider,
    priors: Optional[Sequence[float]] = None,
) -> FactorGraph:
    """Standard six-player graph: clamped state, conditionals from factor_fn."""
    ps = list(factor_fn(encoded))
    if len(ps) != N_PLAYERS:
        raise ValueError(f"factor_fn must return {N_PLAYERS} probabilities, got {len(ps)}")
    graph = build_role_graph(
        ps, n_evil=N_EVIL, priors=priors, self_index=self_player
    )
    # Observed state variables ride along as clamped evidence so the graph
    # mirrors the full layout; conditionals already absorbed their values.
    flat = encoded.flatten()
    for spec, code in zip(STATE_VARIABLE_SPECS, flat):
        graph.add_variable(spec.name, spec.cardinality, evidence=int(code))
    state_names = tuple(spec.name for spec in STATE_VARIABLE_SPECS)
    for factor in graph.factors:
        if factor.name.startswith("cond_"):
            factor.conditioned_on = state_names
    return graph


# ---------------------------------------------------------------------------
# Exact references (enumeration; small player counts only)


def enumerate_evil_sets(n_players: int, n_evil: int) -> Iterable[Tuple[int, ...]]:
    return itertools.combinations(range(1, n_players + 1), n_evil)


def exhaustive_map_oracle(
    encoded: EncodedState,
    factor_fn: ConditionalFactorProvider,
    priors: Optional[Sequence[float]] = None,
) -> tuple[Tuple[int, ...], np.ndarray]:
    """Brute-force MAP and max-marginals over the constraint-satisfying sets.

    Returns (assignment, b) where assignment[j] is 1 if player j+1 is Evil
    in the best-scoring set and b[j] the normalized max-marginal.
    """
    ps = [_checked_probability(p, f"r{j + 1}") for j, p in enumerate(factor_fn(encoded))]
    return score_role_sets(ps, N_EVIL, priors)


def score_role_sets(
    evil_probabilities: Sequence[float],
    n_evil: int,
    priors: Optional[Sequence[float]] = None,
) -> tuple[Tuple[int, ...], np.ndarray]:
    n = len(evil_probabilities)
    if n > 20:
        raise ValueError("exhaustive enumeration is limited to 20 role variables")
    prior_list = [0.5] * n if priors is None else [float(p) for p in priors]
    best_score = -1.0
    best_set: Tuple[int, ...] = ()
    max1 = np.zeros(n)
    max0 = np.zeros(n)
    for evil_set in enumerate_evil_sets(n, n_evil):
        score = 1.0
        for j in range(n):
            evil = (j + 1) in evil_set
            p = evil_probabilities[j] if evil else 1.0 - evil_probabilities[j]
            q = prior_list[j] if evil else 1.0 - prior_list[j]
            score *= p * q
        if score > best_score:
            best_score = score
            best_set = evil_set
        for j in range(n):
            if (j + 1) in evil_set:
                max1[j] = max(max1[j], score)
            else:
                max0[j] = max(max0[j], score)
    assignment = tuple(1 if (j + 1) in best_set else 0 for j in range(n))
    totals = max0 + max1
    if np.any(totals <= 0):
        raise InferenceError("all role sets scored zero")
    return assignment, max1 / totals


def fail_model_conditionals(
    parties: Sequence[Iterable[int]],
    outcomes: Sequence[bool],
    n_players: int,
    n_evil: int,
    fail_prob: float,
) -> np.ndarray:
    """Posterior p(player is Evil | quest results) under the fail model.

    Each Evil party member plays Fail independently with probability
    fail_prob, so P(quest fails | k Evil aboard) = 1 - (1-fail_prob)^k.
    ``outcomes[i]`` is True if quest i failed.  The result is suitable as a
    conditional-factor vector once clipped into (0,1) by the caller.
    """
    if len(parties) != len(outcomes):
        raise ValueError("parties and outcomes must align")
    party_sets = [frozenset(p) for p in parties]
    weights = np.zeros(n_players)
    total = 0.0
    per_player_evil = [0.0] * n_players
    for evil_set in enumerate_evil_sets(n_players, n_evil):
        evil = frozenset(evil_set)
        likelihood = 1.0
        for party, failed in zip(party_sets, outcomes):
            k = len(party & evil)
            p_fail = 1.0 - (1.0 - fail_prob) ** k
            likelihood *= p_fail if failed else 1.0 - p_fail
        total += likelihood
        for player in evil:
            per_player_evil[player - 1] += likelihood
    if total <= 0.0:
        raise InferenceError("observations impossible under the fail model")
    weights = np.array(per_player_evil) / total
    return weights


def clip_probabilities(ps: Sequence[float]) -> list[float]:
    """Squeeze exact 0/1 posteriors into the open interval factors require."""
    return [min(max(float(p), PROB_FLOOR), 1.0 - PROB_FLOOR) for p in ps]
