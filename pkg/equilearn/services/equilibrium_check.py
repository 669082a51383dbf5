"""
Verifiers for correlated and Bayes-Nash equilibria of Bayesian games.

A correlated distribution mu is given as a uniform mixture of product
profiles (CorrelatedProfile). For a type k of player i the deviation gain
of a swap function phi only depends on phi(s)(k), and the objective
separates over the source strategy s, so the best phi is found per s by
an argmax over actions. Only sources with positive mass are scanned, and
each mixture component keeps its product form while they are; the count
is capped by settings.decomposition_cap.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import binom

from equilearn.dependencies import ordered_map
from equilearn.models.reports import EquilibriumReport, Witness
from equilearn.services.bayes_game import (
    BayesianGame,
    BehaviorStrategy,
    CorrelatedProfile,
    MixedStrategy,
    StrategyProfileDist,
    conditional_reward_vector,
)
from equilearn.services.multiscale_dynamics import source_actions
from equilearn.services.regret_core import SwapAssignment, exhaustive_swap_assignment, product_swap_assignment

logger = logging.getLogger(__name__)

GAIN_TOL = 1e-9
EVERY_TYPE = "every-type"
EX_ANTE = "ex-ante"

# number of swap entries kept in a witness
WITNESS_ENTRIES = 8


def _as_correlated(mu) -> CorrelatedProfile:
    if isinstance(mu, CorrelatedProfile):
        return mu
    if isinstance(mu, StrategyProfileDist):
        return CorrelatedProfile.product(mu)
    return CorrelatedProfile.product(StrategyProfileDist(tuple(mu)))


def _swap_rows(mu: CorrelatedProfile, g: BayesianGame, i: int, k: int):
    """One row per (component, mixture part of player i): table, weight and type-k reward vector."""
    tables, weights, rewards = [], [], []
    for c in mu.components:
        strategy = c.per_player[i]
        r = conditional_reward_vector(g, i, k, c)
        for w, part in zip(strategy.weights, strategy.components):
            tables.append(part.table)
            weights.append(w / mu.rank)
            rewards.append(r)
    return np.stack(tables), np.array(weights), np.stack(rewards)


def best_swap_gain(
    mu: CorrelatedProfile,
    g: BayesianGame,
    i: int,
    k: int,
    method: str = "decomposition",
) -> Tuple[float, SwapAssignment]:
    """
    max over phi of E_(theta_-i | theta_i = k) E_(s ~ mu)[u_i(phi(s_i)(k), s_-i) - u_i(s)].
    """
    mu = _as_correlated(mu)
    if method == "decomposition":
        tables, weights, rewards = _swap_rows(mu, g, i, k)
        deviation = product_swap_assignment(tables, weights, rewards, k, keep=WITNESS_ENTRIES)
        return deviation.gain, deviation
    if method != "exhaustive":
        raise ValueError(f"Unknown swap-gain method {method!r}")
    K, n = g.type_counts[i], g.action_counts[i]
    weight = 1.0 / mu.rank
    masses = np.stack([weight * c.per_player[i].pure_masses() for c in mu.components])
    rewards = np.stack([conditional_reward_vector(g, i, k, c) for c in mu.components])
    support = np.flatnonzero(masses.sum(axis=0) > 0)
    masses = masses[:, support]
    value, targets = exhaustive_swap_assignment(masses, rewards, source_actions(K, n, k)[support])
    actions = np.stack(np.unravel_index(support, (n,) * K), axis=1)
    deviation = SwapAssignment.from_gains(value, actions, masses.T @ rewards, targets, k, WITNESS_ENTRIES)
    return value, deviation


def _type_gains(mu, g: BayesianGame, method: str) -> Tuple[List[List[Optional[float]]], dict]:
    cells = [(i, k) for i in range(g.m) for k in g.positive_types(i)]
    results = ordered_map(lambda cell: best_swap_gain(mu, g, cell[0], cell[1], method), cells)
    gains: List[List[Optional[float]]] = [[None] * g.type_counts[i] for i in range(g.m)]
    deviations = {}
    for (i, k), (value, deviation) in zip(cells, results):
        gains[i][k] = value
        deviations[(i, k)] = deviation
    return gains, deviations


def check_every_type_nfce(mu, g: BayesianGame, eps: float, method: str = "decomposition") -> EquilibriumReport:
    """Satisfied iff the best swap gain is at most eps for every player and positive-mass type."""
    gains, deviations = _type_gains(_as_correlated(mu), g, method)
    (i, k), worst = max(deviations.items(), key=lambda item: item[1].gain)
    satisfied = worst.gain <= eps + GAIN_TOL
    report = EquilibriumReport(
        notion=f"{EVERY_TYPE}-nfce",
        epsilon=eps,
        satisfied=satisfied,
        worst_gain=worst.gain,
        witness=None if satisfied else Witness(player=i, type_index=k, gain=worst.gain, deviation=worst.describe()),
        gains=gains,
    )
    logger.info(f"Every-type NFCE check at eps={eps}: worst gain {worst.gain:.6g} (player {i}, type {k})")
    return report


def check_ex_ante_nfce(mu, g: BayesianGame, eps: float, method: str = "decomposition") -> EquilibriumReport:
    """Prior-averaged gain: sum_k rho_i(k) * (best swap gain at type k), worst over players."""
    gains, deviations = _type_gains(_as_correlated(mu), g, method)
    averaged = []
    for i in range(g.m):
        rho = g.type_marginal(i)
        averaged.append(sum(rho[k] * gains[i][k] for k in g.positive_types(i)))
    i = int(np.argmax(averaged))
    worst = float(averaged[i])
    satisfied = worst <= eps + GAIN_TOL
    witness = None
    if not satisfied:
        per_type = {str(k): deviations[(i, k)].describe() for k in g.positive_types(i) if gains[i][k] > 0}
        witness = Witness(player=i, type_index=EX_ANTE, gain=worst, deviation={"per_type": per_type})
    logger.info(f"Ex-ante NFCE check at eps={eps}: worst gain {worst:.6g} (player {i})")
    return EquilibriumReport(
        notion=f"{EX_ANTE}-nfce", epsilon=eps, satisfied=satisfied, worst_gain=worst, witness=witness, gains=gains
    )


# ---------------------------
# Product profiles
# ---------------------------

@dataclass
class TypeDeviation:
    player: int
    type_index: int
    action: int
    gain: float


def bne_type_gains(profile, g: BayesianGame) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """
    Per player, per type: max_j R(j) - sum_a m_k(a) R(a) and the maximizing j,
    where R is the conditional reward vector against the other players.
    Zero-mass types get gain NaN.
    """
    if not isinstance(profile, StrategyProfileDist):
        profile = StrategyProfileDist(tuple(profile))
    gains, actions = [], []
    for i in range(g.m):
        marginals = profile.per_player[i].type_marginals()
        row_gain = np.full(g.type_counts[i], np.nan)
        row_action = np.zeros(g.type_counts[i], dtype=int)
        for k in g.positive_types(i):
            r = conditional_reward_vector(g, i, k, profile)
            j = int(np.argmax(r))
            row_gain[k] = max(0.0, float(r[j] - marginals[k] @ r))
            row_action[k] = j
        gains.append(row_gain)
        actions.append(row_action)
    return gains, actions


def best_type_deviation(profile, g: BayesianGame) -> TypeDeviation:
    gains, actions = bne_type_gains(profile, g)
    best = TypeDeviation(0, 0, 0, -np.inf)
    for i, row in enumerate(gains):
        for k in np.flatnonzero(~np.isnan(row)):
            if row[k] > best.gain:
                best = TypeDeviation(i, int(k), int(actions[i][k]), float(row[k]))
    return best


def check_bne_product(profile, g: BayesianGame, eps: float, mode: str = EVERY_TYPE) -> EquilibriumReport:
    """For a product profile the best swap is the best fixed action per type."""
    gains, actions = bne_type_gains(profile, g)
    table = [[None if np.isnan(x) else float(x) for x in row] for row in gains]
    if mode == EVERY_TYPE:
        worst, cell = -np.inf, (0, 0)
        for i, row in enumerate(gains):
            for k in np.flatnonzero(~np.isnan(row)):
                if row[k] > worst:
                    worst, cell = float(row[k]), (i, int(k))
        i, k = cell
        satisfied = worst <= eps + GAIN_TOL
        witness = None if satisfied else Witness(
            player=i, type_index=k, gain=worst, deviation={"action": int(actions[i][k])}
        )
    elif mode == EX_ANTE:
        averaged = [float(np.nansum(g.type_marginal(i) * gains[i])) for i in range(g.m)]
        i = int(np.argmax(averaged))
        worst = averaged[i]
        satisfied = worst <= eps + GAIN_TOL
        witness = None if satisfied else Witness(
            player=i, type_index=EX_ANTE, gain=worst,
            deviation={"actions": [int(a) for a in actions[i]]},
        )
    else:
        raise ValueError(f"Unknown BNE mode {mode!r}")
    return EquilibriumReport(
        notion=f"{mode}-bne", epsilon=eps, satisfied=satisfied, worst_gain=worst, witness=witness, gains=table
    )


# ---------------------------
# Behaviorizing a correlated equilibrium
# ---------------------------
# Alice (player 0) has n types and actions {0, 1, 2, 3}; Bob (player 1) has one
# type, two actions and payoff 0. Alice's payoff does not depend on Alice's type:
# actions 0 and 1 pay 0, action 2 pays 1 against Bob's 0 and -2 against Bob's 1,
# action 3 pays -2 against Bob's 0 and 1 against Bob's 1.

ALICE_PAYOFF = np.array([
    [0.0, 0.0],
    [0.0, 0.0],
    [1.0, -2.0],
    [-2.0, 1.0],
])


def appendix_a_game(n: int) -> BayesianGame:
    if n < 1:
        raise ValueError(f"Need at least one type, got n={n}")
    alice = np.broadcast_to(ALICE_PAYOFF, (n, 1, 4, 2)).copy()
    bob = np.zeros((n, 1, 4, 2))
    prior = np.full((n, 1), 1.0 / n)
    return BayesianGame((n, 1), (4, 2), prior, (alice, bob), payoff_bounds=(-2.0, 1.0))


def appendix_a_profile(n: int) -> CorrelatedProfile:
    """
    Rank-2 correlated equilibrium: Alice plays all-0 or all-1 with weights
    (1/3, 2/3) while Bob plays 0, and (2/3, 1/3) while Bob plays 1.
    """
    all_zero = BehaviorStrategy.pure((0,) * n, 4)
    all_one = BehaviorStrategy.pure((1,) * n, 4)
    components = []
    for weights, bob_action in (((1 / 3, 2 / 3), 0), ((2 / 3, 1 / 3), 1)):
        alice = MixedStrategy(np.array(weights), (all_zero, all_one))
        bob = BehaviorStrategy.pure((bob_action,), 2)
        components.append(StrategyProfileDist.of(alice, bob))
    return CorrelatedProfile(tuple(components))


def appendix_window(n: int) -> float:
    return math.sqrt(n) * math.log(n)


def appendix_swap_target(weight: int, n: int) -> Optional[int]:
    """
    Action the swap plays (at every type) for an all-{0,1} strategy with
    `weight` ones: 3 near n/3, 2 near 2n/3, None otherwise. Where the two
    windows overlap the nearer centre wins; exact ties keep the strategy.
    """
    r = appendix_window(n)
    # distances scaled by 3 so the centres stay integers
    in_low = abs(3 * weight - n) < 3 * r
    in_high = abs(3 * weight - 2 * n) < 3 * r
    if in_low and in_high:
        if 2 * weight == n:
            return None
        return 3 if 2 * weight < n else 2
    if in_low:
        return 3
    if in_high:
        return 2
    return None


def appendix_a_swap(s: Sequence[int], n: int) -> Tuple[int, ...]:
    """The swap function on full strategies; strategies using actions 2 or 3 are kept."""
    if any(a not in (0, 1) for a in s):
        return tuple(s)
    target = appendix_swap_target(sum(s), n)
    return tuple(s) if target is None else (target,) * n


def _weight_pmfs(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Number of ones in the behaviorized all-{0,1} strategy: Binomial(n, 2/3) under Bob's 0, Binomial(n, 1/3) under Bob's 1."""
    weights = np.arange(n + 1)
    return binom.pmf(weights, n, 2 / 3), binom.pmf(weights, n, 1 / 3)


def appendix_a_demo(n: int) -> Tuple[float, float]:
    """
    Returns (ce_gain, behaviorized_gain) for the type-independent per-type
    gain of Alice: the best swap gain under the rank-2 profile, and the
    window swap's gain under its behaviorization.
    """
    if n < 4:
        raise ValueError(f"n must be at least 4, got {n}")
    ce_gain, _ = best_swap_gain(appendix_a_profile(n), appendix_a_game(n), 0, 0)

    pmf_bob0, pmf_bob1 = _weight_pmfs(n)
    behaviorized = 0.0
    for w in range(n + 1):
        target = appendix_swap_target(w, n)
        if target is not None:
            behaviorized += 0.5 * (pmf_bob0[w] * ALICE_PAYOFF[target, 0] + pmf_bob1[w] * ALICE_PAYOFF[target, 1])
    logger.info(f"Behaviorization example n={n}: ce gain {ce_gain:.3g}, window swap {behaviorized:.6f}")
    return float(ce_gain), float(behaviorized)


def behaviorized_best_swap_gain(n: int) -> float:
    """
    Best swap gain under the behaviorized profile. A strategy's best target
    only depends on its number of ones, so the sum runs over n + 1 weights
    instead of 2^n strategies.
    """
    if n < 1:
        raise ValueError(f"Need at least one type, got n={n}")
    pmf_bob0, pmf_bob1 = _weight_pmfs(n)
    best = 0.5 * np.maximum.reduce([
        np.zeros_like(pmf_bob0),
        pmf_bob0 * ALICE_PAYOFF[2, 0] + pmf_bob1 * ALICE_PAYOFF[2, 1],
        pmf_bob0 * ALICE_PAYOFF[3, 0] + pmf_bob1 * ALICE_PAYOFF[3, 1],
    ]).sum()
    return float(best)
