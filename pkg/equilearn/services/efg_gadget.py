"""
Three-player repeated gadget built on a two-player Bayesian game.

In every repetition the Kibitzer picks (player i, type theta_i, suggested
action), nature draws the other type from rho | theta_i, and both players
act on their own types. The Kibitzer is paid the target's shortfall against
the suggestion, the target the opposite, and the third player nothing.
Repetitions are averaged, so each one contributes at most 1/H in absolute
value.

Strategies are oracles keyed by the history of earlier outcomes; the tree
itself is never built. Everything stochastic is estimated along rollouts
drawn from split generator streams.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from equilearn.config import get_settings
from equilearn.dependencies import ordered_map
from equilearn.exceptions import (
    DistributionError,
    GameValidationError,
    ScaleCapExceededError,
)
from equilearn.models.reports import UtilityEstimate
from equilearn.services.bayes_game import (
    BayesianGame,
    BehaviorStrategy,
    MixedStrategy,
    StrategyProfileDist,
    conditional_reward_vector,
)
from equilearn.services.equilibrium_check import TypeDeviation, best_type_deviation, check_bne_product
from equilearn.services.finite_dist import FiniteDist, sample
from equilearn.services.regret_core import VovkState, vovk_update

logger = logging.getLogger(__name__)

KIBITZER = 2


class KibitzerAction(NamedTuple):
    target_player: int
    target_type: int
    suggested_action: int


@dataclass(frozen=True)
class GadgetOutcome:
    actions: Tuple[int, int]
    kibitzer: KibitzerAction
    types: Tuple[int, int]


@dataclass(frozen=True)
class History:
    outcomes: Tuple[GadgetOutcome, ...] = ()

    def __len__(self) -> int:
        return len(self.outcomes)

    def extend(self, outcome: GadgetOutcome) -> "History":
        return History(self.outcomes + (outcome,))


PlayerOracle = Callable[[History], np.ndarray]
KibitzerOracle = Callable[[History], np.ndarray]


def _require_two_players(g: BayesianGame) -> None:
    if g.m != 2:
        raise GameValidationError(f"The gadget needs a two-player game, got m={g.m}")


@lru_cache(maxsize=64)
def kibitzer_actions(g: BayesianGame) -> Tuple[KibitzerAction, ...]:
    """A_K over positive-mass types, ordered by player, type, action."""
    _require_two_players(g)
    return tuple(
        KibitzerAction(i, k, a)
        for i in range(2)
        for k in g.positive_types(i)
        for a in range(g.action_counts[i])
    )


@dataclass(frozen=True, eq=False)
class EfgBehaviorProfile:
    """One oracle per player: (K_i, n_i) tables for players 0 and 1, a distribution over A_K for the Kibitzer."""
    players: Tuple[PlayerOracle, PlayerOracle]
    kibitzer: KibitzerOracle

    def player_table(self, i: int, history: History) -> np.ndarray:
        return BehaviorStrategy(self.players[i](history)).table

    def kibitzer_probs(self, g: BayesianGame, history: History) -> np.ndarray:
        probs = FiniteDist(self.kibitzer(history)).probs
        if probs.size != len(kibitzer_actions(g)):
            raise DistributionError(f"Kibitzer oracle returned {probs.size} probabilities for {len(kibitzer_actions(g))} actions")
        return probs

    @classmethod
    def stationary(cls, g: BayesianGame, tables: Sequence, kibitzer=None) -> "EfgBehaviorProfile":
        """History-independent profile; the Kibitzer defaults to uniform over A_K."""
        frozen = tuple(BehaviorStrategy(t).table for t in tables)
        if kibitzer is None:
            size = len(kibitzer_actions(g))
            kibitzer = np.full(size, 1.0 / size)
        kibitzer = FiniteDist(kibitzer).probs
        return cls(
            players=(lambda h, t=frozen[0]: t, lambda h, t=frozen[1]: t),
            kibitzer=lambda h, p=kibitzer: p,
        )


@dataclass(frozen=True, eq=False)
class RankTCce:
    components: Tuple[EfgBehaviorProfile, ...]

    def __post_init__(self):
        components = tuple(self.components)
        if not components:
            raise DistributionError("A rank-T profile needs T >= 1 components")
        object.__setattr__(self, "components", components)

    @property
    def rank(self) -> int:
        return len(self.components)


Profile = Union[EfgBehaviorProfile, RankTCce]


def _components(profile: Profile) -> Tuple[EfgBehaviorProfile, ...]:
    return profile.components if isinstance(profile, RankTCce) else (profile,)


# ---------------------------
# One gadget
# ---------------------------

def gadget_utility(g: BayesianGame, o: GadgetOutcome) -> np.ndarray:
    """(u_0, u_1, u_K); zero-sum by construction."""
    i, _, suggested = o.kibitzer
    u = g.utilities[i]
    theta = tuple(o.types)
    played = tuple(o.actions)
    swapped = list(played)
    swapped[i] = suggested
    diff = float(u[theta + played] - u[theta + tuple(swapped)])
    result = np.zeros(3)
    result[i] = diff
    result[KIBITZER] = -diff
    return result


def other(i: int) -> int:
    return 1 - i


def sample_gadget_outcome(
    g: BayesianGame,
    profile: EfgBehaviorProfile,
    history: History,
    rng_state: np.random.Generator,
) -> GadgetOutcome:
    """
    Draw a_K, then the target's action, then nature's type for the other
    player, then that player's action. Nothing queried before the nature
    draw can depend on it.
    """
    actions = kibitzer_actions(g)
    a_k = actions[sample(FiniteDist(profile.kibitzer_probs(g, history)), rng_state)]
    i, theta_i, _ = a_k
    j = other(i)
    a_i = sample(FiniteDist(profile.player_table(i, history)[theta_i]), rng_state)
    theta_j = sample(g.conditional_prior(i, theta_i), rng_state)
    a_j = sample(FiniteDist(profile.player_table(j, history)[theta_j]), rng_state)
    types = [0, 0]
    types[i], types[j] = theta_i, theta_j
    acts = [0, 0]
    acts[i], acts[j] = a_i, a_j
    return GadgetOutcome(tuple(acts), a_k, tuple(types))


def _rho_term(g: BayesianGame, o: GadgetOutcome) -> float:
    i = o.kibitzer.target_player
    return g.conditional_prior(i, o.types[i]).probs[o.types[other(i)]]


def outcome_likelihoods(g: BayesianGame, mu: RankTCce, history: History, o: GadgetOutcome, observer: int) -> np.ndarray:
    """
    Per-component probability of the part of `o` the observer does not control.

    observer 0 or 1: x_K(a_K) * rho-term * x_(i')(theta_(i'), a_(i')).
    observer KIBITZER: rho-term * x_0(theta_0, a_0) * x_1(theta_1, a_1), given a_K.
    """
    index = kibitzer_actions(g).index(o.kibitzer)
    rho = _rho_term(g, o)
    values = np.empty(mu.rank)
    for t, component in enumerate(mu.components):
        if observer == KIBITZER:
            values[t] = rho * np.prod([
                component.player_table(p, history)[o.types[p], o.actions[p]] for p in range(2)
            ])
        else:
            j = other(observer)
            values[t] = (
                component.kibitzer_probs(g, history)[index]
                * rho
                * component.player_table(j, history)[o.types[j], o.actions[j]]
            )
    return values


def component_posterior(g: BayesianGame, mu: RankTCce, history: History, observer: int) -> VovkState:
    """Aggregating-algorithm posterior over components after `history`, from the observer's side."""
    state = VovkState(mu.rank)
    for h, o in enumerate(history.outcomes):
        state = vovk_update(state, outcome_likelihoods(g, mu, History(history.outcomes[:h]), o, observer))
    return state


# ---------------------------
# Rollouts
# ---------------------------

def _estimate(samples: np.ndarray) -> UtilityEstimate:
    n = samples.shape[0]
    stderr = samples.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(samples.shape[1])
    return UtilityEstimate(mean=samples.mean(axis=0).tolist(), stderr=stderr.tolist(), rollouts=n)


def _rollout(g: BayesianGame, H: int, components, rng: np.random.Generator) -> np.ndarray:
    component = components[int(rng.integers(len(components)))]
    history = History()
    total = np.zeros(3)
    for _ in range(H):
        o = sample_gadget_outcome(g, component, history, rng)
        total += gadget_utility(g, o) / H
        history = history.extend(o)
    return total


def rollout_samples(g: BayesianGame, H: int, profile: Profile, num_rollouts: int, rng_state: np.random.Generator) -> np.ndarray:
    """(num_rollouts, 3) per-rollout utilities; each rollout first draws a component uniformly."""
    _require_two_players(g)
    if num_rollouts < 1 or H < 1:
        raise ValueError(f"Need num_rollouts >= 1 and H >= 1, got {num_rollouts}, {H}")
    components = _components(profile)
    streams = rng_state.spawn(num_rollouts)
    return np.array(ordered_map(lambda rng: _rollout(g, H, components, rng), streams))


def rollout_utility(g: BayesianGame, H: int, profile: Profile, num_rollouts: int, rng_state: np.random.Generator) -> UtilityEstimate:
    return _estimate(rollout_samples(g, H, profile, num_rollouts, rng_state))


def _branches(g: BayesianGame, component: EfgBehaviorProfile, history: History):
    """Every outcome at a gadget with its probability."""
    actions = kibitzer_actions(g)
    probs_k = component.kibitzer_probs(g, history)
    tables = [component.player_table(p, history) for p in range(2)]
    for idx in np.flatnonzero(probs_k):
        a_k = actions[idx]
        i, theta_i, _ = a_k
        j = other(i)
        cond = g.conditional_prior(i, theta_i).probs
        for a_i in np.flatnonzero(tables[i][theta_i]):
            for theta_j in np.flatnonzero(cond):
                for a_j in np.flatnonzero(tables[j][theta_j]):
                    types, acts = [0, 0], [0, 0]
                    types[i], types[j] = theta_i, int(theta_j)
                    acts[i], acts[j] = int(a_i), int(a_j)
                    p = probs_k[idx] * tables[i][theta_i, a_i] * cond[theta_j] * tables[j][theta_j, a_j]
                    yield p, GadgetOutcome(tuple(acts), a_k, tuple(types))


def exact_profile_utility(g: BayesianGame, H: int, profile: Profile) -> np.ndarray:
    """Expected utilities by walking the whole tree; only for tiny H."""
    _require_two_players(g)
    per_gadget = len(kibitzer_actions(g)) * g.max_types * max(g.action_counts) ** 2
    if per_gadget ** H > get_settings().expansion_cap:
        raise ScaleCapExceededError(f"Tree with up to {per_gadget}^{H} leaves exceeds the expansion cap")

    def walk(component, history: History) -> np.ndarray:
        if len(history) == H:
            return np.zeros(3)
        value = np.zeros(3)
        for p, o in _branches(g, component, history):
            value += p * (gadget_utility(g, o) / H + walk(component, history.extend(o)))
        return value

    components = _components(profile)
    return np.mean([walk(c, History()) for c in components], axis=0)


def exact_component_posteriors(g: BayesianGame, H: int, mu: RankTCce, observer: int) -> Dict[History, FiniteDist]:
    """Posterior over components for every history of length < H reachable under mu."""
    if mu.rank > 4 or H > 2:
        raise ScaleCapExceededError("Exact posteriors are limited to T <= 4 and H <= 2")
    found: Dict[History, FiniteDist] = {}
    frontier = {History()}
    for _ in range(H):
        next_frontier = set()
        for history in frontier:
            found[history] = component_posterior(g, mu, history, observer).posterior()
            if len(history) + 1 < H:
                for component in mu.components:
                    for p, o in _branches(g, component, history):
                        next_frontier.add(history.extend(o))
        frontier = next_frontier
    return found


# ---------------------------
# Player deviation
# ---------------------------

def best_response_table(g: BayesianGame, mu: RankTCce, history: History, i: int, posterior: np.ndarray) -> np.ndarray:
    """
    Pure per-type best response of player i to the posterior-weighted play of
    the others at this gadget. Only gadgets where the Kibitzer targets i pay
    i, so type theta_i weighs each component's reward vector by the
    Kibitzer's mass on (i, theta_i, .).
    """
    j = other(i)
    actions = kibitzer_actions(g)
    K, n = g.type_counts[i], g.action_counts[i]
    score = np.zeros((K, n))
    for q, component in zip(posterior, mu.components):
        if q <= 0:
            continue
        probs_k = component.kibitzer_probs(g, history)
        opponent = {j: BehaviorStrategy(component.player_table(j, history))}
        for k in g.positive_types(i):
            targeted = sum(p for p, a in zip(probs_k, actions) if a.target_player == i and a.target_type == k)
            if targeted > 0:
                score[k] += q * targeted * conditional_reward_vector(g, i, k, opponent)
    table = np.zeros((K, n))
    table[np.arange(K), np.argmax(score, axis=1)] = 1.0
    return table


def _deviation_rollout(g: BayesianGame, H: int, mu: RankTCce, i: int, rng: np.random.Generator) -> np.ndarray:
    truth = mu.components[int(rng.integers(mu.rank))]
    state = VovkState(mu.rank)
    history = History()
    total = np.zeros(3)
    for _ in range(H):
        response = best_response_table(g, mu, history, i, state.posterior().probs)
        players = [truth.players[0], truth.players[1]]
        players[i] = lambda h, r=response: r
        deviated = EfgBehaviorProfile(tuple(players), truth.kibitzer)
        o = sample_gadget_outcome(g, deviated, history, rng)
        state = vovk_update(state, outcome_likelihoods(g, mu, history, o, observer=i))
        total += gadget_utility(g, o) / H
        history = history.extend(o)
    return total


def deviation_rollout_player(
    g: BayesianGame,
    H: int,
    mu: RankTCce,
    i: int,
    num_rollouts: int,
    rng_state: np.random.Generator,
) -> UtilityEstimate:
    """Utilities when player i tracks the component by posterior and best-responds at every gadget."""
    _require_two_players(g)
    if i not in (0, 1):
        raise ValueError(f"Deviating player must be 0 or 1, got {i}")
    streams = rng_state.spawn(num_rollouts)
    samples = np.array(ordered_map(lambda rng: _deviation_rollout(g, H, mu, i, rng), streams))
    return _estimate(samples)


# ---------------------------
# Kibitzer deviation and reduction
# ---------------------------

def default_horizon(rank: int, eps: float) -> int:
    """Smallest H >= 2 with H >= ln(T)/eps^2; rank 1 counts as 2."""
    if not 0 < eps <= 1:
        raise ValueError(f"Deriving H needs eps in (0, 1], got {eps}")
    return max(2, math.ceil(math.log(max(rank, 2)) / eps ** 2))


def _warn_horizon(H: int, rank: int, eps: float) -> None:
    if rank == 1:
        return
    needed = math.log(rank) / eps ** 2 if eps > 0 else math.inf
    if H < needed:
        logger.warning(f"H={H} is below ln(T)/eps^2 = {needed:.3f} for T={rank}; the 16*eps guarantee does not apply")


@dataclass
class GadgetDecision:
    profile: StrategyProfileDist
    satisfied: bool
    worst_gain: float
    deviation: TypeDeviation


def gadget_decision(g: BayesianGame, mu: RankTCce, history: History, posterior: np.ndarray, threshold: float) -> GadgetDecision:
    """p_i = posterior-weighted mixture of the components' tables; test it and find the Kibitzer's action."""
    support = np.flatnonzero(posterior > 0)
    weights = posterior[support] / posterior[support].sum()
    profile = StrategyProfileDist(tuple(
        MixedStrategy(weights, tuple(BehaviorStrategy(mu.components[t].player_table(p, history)) for t in support))
        for p in range(2)
    ))
    report = check_bne_product(profile, g, threshold)
    return GadgetDecision(profile, report.satisfied, report.worst_gain, best_type_deviation(profile, g))


def _kibitzer_rollout(g: BayesianGame, H: int, mu: RankTCce, threshold: float, rng: np.random.Generator):
    truth = mu.components[int(rng.integers(mu.rank))]
    state = VovkState(mu.rank)
    history = History()
    total = np.zeros(3)
    bne_hits = 0
    actions = kibitzer_actions(g)
    for _ in range(H):
        decision = gadget_decision(g, mu, history, state.posterior().probs, threshold)
        bne_hits += int(decision.satisfied)
        d = decision.deviation
        probs = np.zeros(len(actions))
        probs[actions.index(KibitzerAction(d.player, d.type_index, d.action))] = 1.0
        deviated = EfgBehaviorProfile(truth.players, lambda h, p=probs: p)
        o = sample_gadget_outcome(g, deviated, history, rng)
        state = vovk_update(state, outcome_likelihoods(g, mu, history, o, observer=KIBITZER))
        total += gadget_utility(g, o) / H
        history = history.extend(o)
    return total, bne_hits


@dataclass
class KibitzerDeviationEstimate:
    estimate: UtilityEstimate
    bne_gadgets: int = 0


def kibitzer_deviation_utility(
    g: BayesianGame,
    H: int,
    mu: RankTCce,
    eps: float,
    num_rollouts: int,
    rng_state: np.random.Generator,
) -> KibitzerDeviationEstimate:
    """
    Utilities when the Kibitzer plays the reduction's choice at every gadget.
    Gadgets where the posterior profile already is a 16*eps BNE are counted;
    there the Kibitzer still plays the best available deviation.
    """
    _require_two_players(g)
    _warn_horizon(H, mu.rank, eps)
    streams = rng_state.spawn(num_rollouts)
    results = ordered_map(lambda rng: _kibitzer_rollout(g, H, mu, 16 * eps, rng), streams)
    samples = np.array([r[0] for r in results])
    return KibitzerDeviationEstimate(_estimate(samples), sum(r[1] for r in results))


@dataclass
class ReductionResult:
    success: bool
    threshold: float
    gadgets_visited: int
    profile: Optional[StrategyProfileDist] = None
    worst_gain: Optional[float] = None
    history_length: Optional[int] = None
    best_profile: Optional[StrategyProfileDist] = None
    best_gain: float = math.inf
    best_history_length: Optional[int] = None
    deviations: List[TypeDeviation] = field(default_factory=list)


def reduction_extract_bne(
    g: BayesianGame,
    H: int,
    mu: RankTCce,
    eps: float,
    budget: int,
    rng_state: np.random.Generator,
) -> ReductionResult:
    """
    Walk gadgets along rollouts of the Kibitzer's deviation. At every visited
    gadget the posterior-weighted profile is tested as a 16*eps BNE; on
    success it is returned, otherwise the Kibitzer plays the best per-type
    deviation and the walk continues. Running out of budget is reported, not
    raised.
    """
    _require_two_players(g)
    if H < 1:
        raise ValueError(f"H must be >= 1, got {H}")
    threshold = 16 * eps
    _warn_horizon(H, mu.rank, eps)
    result = ReductionResult(success=False, threshold=threshold, gadgets_visited=0)
    actions = kibitzer_actions(g)
    rollout = 0
    while result.gadgets_visited < budget:
        rng = rng_state.spawn(1)[0]
        truth = mu.components[int(rng.integers(mu.rank))]
        state = VovkState(mu.rank)
        history = History()
        for _ in range(H):
            if result.gadgets_visited >= budget:
                break
            decision = gadget_decision(g, mu, history, state.posterior().probs, threshold)
            result.gadgets_visited += 1
            if decision.worst_gain < result.best_gain:
                result.best_gain = decision.worst_gain
                result.best_profile = decision.profile
                result.best_history_length = len(history)
            if decision.satisfied:
                result.success = True
                result.profile = decision.profile
                result.worst_gain = decision.worst_gain
                result.history_length = len(history)
                logger.info(
                    f"Found a {threshold:g}-BNE after {result.gadgets_visited} gadgets "
                    f"(rollout {rollout}, depth {len(history)}, gain {decision.worst_gain:.6g})"
                )
                return result
            d = decision.deviation
            result.deviations.append(d)
            logger.debug(f"Gadget depth {len(history)}: Kibitzer targets player {d.player} type {d.type_index} with gain {d.gain:.6g}")
            probs = np.zeros(len(actions))
            probs[actions.index(KibitzerAction(d.player, d.type_index, d.action))] = 1.0
            deviated = EfgBehaviorProfile(truth.players, lambda h, p=probs: p)
            o = sample_gadget_outcome(g, deviated, history, rng)
            state = vovk_update(state, outcome_likelihoods(g, mu, history, o, observer=KIBITZER))
            history = history.extend(o)
        rollout += 1
    logger.warning(f"Reduction budget of {budget} gadgets exhausted; best gain {result.best_gain:.6g}")
    return result


def profile_from_dynamics(g: BayesianGame, trace, kibitzer=None) -> RankTCce:
    """
    One history-independent component per day of a two-player dynamics run.
    Each day's thread mixture enters through its per-type marginals, which
    is equivalent inside a gadget since a player sees one type there.
    """
    _require_two_players(g)
    components = []
    for t in range(1, trace.days + 1):
        tables = [trace.mixture(p, t).type_marginals() for p in range(2)]
        components.append(EfgBehaviorProfile.stationary(g, tables, kibitzer))
    return RankTCce(tuple(components))
