"""
Bayesian games and the strategy objects played in them.

Tables are dense numpy arrays:
  prior          shape (K_1, ..., K_m)
  utilities[i]   shape (K_1, ..., K_m, n_1, ..., n_m)
Player and type indices are 0-based. Expectations are evaluated by exact
contraction with `numpy.einsum`; a mixed strategy only ever enters an
expectation through its per-type action marginals, so opponents never
require the n^K pure-strategy space.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from functools import reduce
from typing import Dict, Iterator, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from equilearn.config import get_settings
from equilearn.exceptions import (
    DistributionError,
    GameValidationError,
    ScaleCapExceededError,
    ZeroProbabilityTypeError,
)
from equilearn.services.finite_dist import FiniteDist, condition, sample_many, sample_rows

logger = logging.getLogger(__name__)

PureStrategy = Tuple[int, ...]


# ---------------------------
# Game
# ---------------------------

@dataclass(frozen=True, eq=False)
class BayesianGame:
    type_counts: Tuple[int, ...]
    action_counts: Tuple[int, ...]
    prior: np.ndarray
    utilities: Tuple[np.ndarray, ...]
    payoff_bounds: Tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "type_counts", tuple(int(k) for k in self.type_counts))
        object.__setattr__(self, "action_counts", tuple(int(n) for n in self.action_counts))
        prior = np.array(self.prior, dtype=np.float64)
        prior.setflags(write=False)
        object.__setattr__(self, "prior", prior)
        utilities = []
        for u in self.utilities:
            u = np.array(u, dtype=np.float64)
            u.setflags(write=False)
            utilities.append(u)
        object.__setattr__(self, "utilities", tuple(utilities))

    @property
    def m(self) -> int:
        return len(self.type_counts)

    @property
    def max_actions(self) -> int:
        return max(self.action_counts)

    @property
    def max_types(self) -> int:
        return max(self.type_counts)

    def prior_dist(self) -> FiniteDist:
        return FiniteDist.from_joint(self.prior)

    def type_marginal(self, i: int) -> np.ndarray:
        axes = tuple(a for a in range(self.m) if a != i)
        return self.prior.sum(axis=axes) if axes else self.prior.copy()

    def positive_types(self, i: int) -> list:
        return [k for k, p in enumerate(self.type_marginal(i)) if p > 0]

    def conditional_prior(self, i: int, k: int) -> FiniteDist:
        """rho | theta_i = k, over the other players' types (row-major)."""
        if self.type_marginal(i)[k] <= 0:
            raise ZeroProbabilityTypeError(i, k)
        if self.m == 1:
            return FiniteDist.point_mass(0, 1)
        return condition(self.prior_dist(), k, axis=i)


def validate_game(g: BayesianGame) -> None:
    """Raise GameValidationError describing the first violated invariant."""
    m = g.m
    if m < 1:
        raise GameValidationError("A game needs at least one player")
    if len(g.action_counts) != m:
        raise GameValidationError(f"Got {len(g.action_counts)} action counts for {m} players")
    for i, (k, n) in enumerate(zip(g.type_counts, g.action_counts)):
        if k < 1 or n < 1:
            raise GameValidationError(f"Player {i} needs at least one type and one action, got K={k}, n={n}")
    if g.prior.shape != g.type_counts:
        raise GameValidationError(f"Prior has shape {g.prior.shape}, expected {g.type_counts}")
    if not np.all(np.isfinite(g.prior)) or np.any(g.prior < 0):
        index = np.unravel_index(int(np.argmin(np.where(np.isfinite(g.prior), g.prior, -np.inf))), g.prior.shape)
        raise GameValidationError(f"Prior entry {tuple(int(x) for x in index)} is negative or not finite")
    total = float(g.prior.sum())
    if abs(total - 1.0) > get_settings().normalization_tol:
        raise GameValidationError(f"Prior is not normalized: sums to {total!r}")
    if len(g.utilities) != m:
        raise GameValidationError(f"Got {len(g.utilities)} utility tables for {m} players")
    low, high = g.payoff_bounds
    expected = g.type_counts + g.action_counts
    for i, u in enumerate(g.utilities):
        if u.shape != expected:
            raise GameValidationError(f"Utility table of player {i} has shape {u.shape}, expected {expected}")
        bad = ~np.isfinite(u) | (u < low) | (u > high)
        if np.any(bad):
            index = tuple(int(x) for x in np.unravel_index(int(np.argmax(bad)), u.shape))
            raise GameValidationError(
                f"Utility of player {i} at index {index} is {float(u[index])!r}, outside [{low}, {high}]"
            )


def random_game(
    type_counts: Sequence[int],
    action_counts: Sequence[int],
    rng: np.random.Generator,
    uniform_prior: bool = False,
) -> BayesianGame:
    """Random game with Dirichlet(1) prior (or uniform) and U[0,1] payoffs."""
    type_counts = tuple(type_counts)
    action_counts = tuple(action_counts)
    if uniform_prior:
        prior = np.full(type_counts, 1.0 / int(np.prod(type_counts)))
    else:
        prior = rng.dirichlet(np.ones(int(np.prod(type_counts)))).reshape(type_counts)
    utilities = tuple(rng.random(type_counts + action_counts) for _ in type_counts)
    return BayesianGame(type_counts, action_counts, prior, utilities)


# ---------------------------
# Strategies
# ---------------------------

def pure_strategies(num_types: int, num_actions: int) -> Iterator[PureStrategy]:
    """All s: types -> actions, in row-major order (last type fastest)."""
    return itertools.product(range(num_actions), repeat=num_types)


def pure_strategy_index(s: PureStrategy, num_actions: int) -> int:
    return int(np.ravel_multi_index(tuple(s), (num_actions,) * len(s)))


def validate_pure_strategy(s: PureStrategy, num_types: int, num_actions: int) -> None:
    if len(s) != num_types:
        raise DistributionError(f"Pure strategy has {len(s)} entries, expected {num_types}")
    if any(not 0 <= a < num_actions for a in s):
        raise DistributionError(f"Pure strategy {tuple(s)} has an action outside [0, {num_actions})")


@dataclass(frozen=True, eq=False)
class BehaviorStrategy:
    """One action distribution per type: table[k] is in Delta(A_i)."""
    table: np.ndarray

    def __post_init__(self):
        table = np.array(self.table, dtype=np.float64)
        if table.ndim != 2 or table.shape[0] < 1 or table.shape[1] < 1:
            raise DistributionError(f"Behavior strategy table must be (K, n), got shape {table.shape}")
        tol = get_settings().normalization_tol
        if np.any(table < 0) or np.any(np.abs(table.sum(axis=1) - 1.0) > tol):
            raise DistributionError("Every type row of a behavior strategy must be a distribution")
        table.setflags(write=False)
        object.__setattr__(self, "table", table)

    @classmethod
    def uniform(cls, num_types: int, num_actions: int) -> "BehaviorStrategy":
        return cls(np.full((num_types, num_actions), 1.0 / num_actions))

    @classmethod
    def pure(cls, s: PureStrategy, num_actions: int) -> "BehaviorStrategy":
        table = np.zeros((len(s), num_actions))
        table[np.arange(len(s)), list(s)] = 1.0
        return cls(table)

    @property
    def num_types(self) -> int:
        return self.table.shape[0]

    @property
    def num_actions(self) -> int:
        return self.table.shape[1]

    def pure_masses(self) -> np.ndarray:
        """Probability of every pure strategy, flattened row-major."""
        return reduce(np.multiply.outer, self.table).ravel()


@dataclass(frozen=True, eq=False)
class MixedStrategy:
    """
    Distribution over pure strategies, kept as a weighted mixture of behavior
    strategies. An explicit distribution over S_i is the special case whose
    components are point masses.
    """
    weights: np.ndarray
    components: Tuple[BehaviorStrategy, ...]

    def __post_init__(self):
        weights = FiniteDist(self.weights).probs
        components = tuple(self.components)
        if len(components) != weights.size:
            raise DistributionError(f"{weights.size} weights for {len(components)} components")
        if len({c.table.shape for c in components}) != 1:
            raise DistributionError("Mixture components disagree on (K, n)")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "components", components)

    @classmethod
    def of(cls, behavior: BehaviorStrategy) -> "MixedStrategy":
        return cls(np.ones(1), (behavior,))

    @classmethod
    def uniform_mixture(cls, behaviors: Sequence[BehaviorStrategy]) -> "MixedStrategy":
        return cls(np.full(len(behaviors), 1.0 / len(behaviors)), tuple(behaviors))

    @classmethod
    def from_pure_dist(cls, dist: FiniteDist, num_types: int, num_actions: int) -> "MixedStrategy":
        """Explicit distribution over S_i (flattened row-major, size n^K)."""
        if dist.size != num_actions ** num_types:
            raise DistributionError(f"Expected {num_actions ** num_types} pure-strategy probabilities, got {dist.size}")
        support = dist.support()
        shape = (num_actions,) * num_types
        components = tuple(
            BehaviorStrategy.pure(tuple(int(a) for a in np.unravel_index(int(idx), shape)), num_actions)
            for idx in support
        )
        return cls(dist.probs[support], components)

    @property
    def num_types(self) -> int:
        return self.components[0].num_types

    @property
    def num_actions(self) -> int:
        return self.components[0].num_actions

    def type_marginals(self) -> np.ndarray:
        """(K, n) table: probability that s(k) = a."""
        return np.tensordot(self.weights, np.stack([c.table for c in self.components]), axes=1)

    def behaviorize(self) -> BehaviorStrategy:
        return BehaviorStrategy(self.type_marginals())

    def pure_masses(self, cap: Optional[int] = None) -> np.ndarray:
        size = self.num_actions ** self.num_types
        cap = get_settings().pure_strategy_cap if cap is None else cap
        if size > cap:
            raise ScaleCapExceededError(
                f"Pure strategy space has {size} elements, above the enumeration cap {cap}"
            )
        return sum(w * c.pure_masses() for w, c in zip(self.weights, self.components))


StrategyLike = Union[MixedStrategy, BehaviorStrategy]


def as_mixed(strategy: StrategyLike) -> MixedStrategy:
    if isinstance(strategy, MixedStrategy):
        return strategy
    if isinstance(strategy, BehaviorStrategy):
        return MixedStrategy.of(strategy)
    raise DistributionError(f"Unsupported strategy object: {type(strategy).__name__}")


@dataclass(frozen=True, eq=False)
class StrategyProfileDist:
    """Independent strategies, one per player (a product distribution over S)."""
    per_player: Tuple[Optional[MixedStrategy], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "per_player", tuple(None if s is None else as_mixed(s) for s in self.per_player)
        )

    @classmethod
    def of(cls, *strategies: Optional[StrategyLike]) -> "StrategyProfileDist":
        return cls(tuple(strategies))

    def marginals(self) -> Dict[int, np.ndarray]:
        return {j: s.type_marginals() for j, s in enumerate(self.per_player) if s is not None}


@dataclass(frozen=True, eq=False)
class CorrelatedProfile:
    """Uniform mixture of product profiles: mu = (1/T) sum_t prod_i p_i^(t)."""
    components: Tuple[StrategyProfileDist, ...]

    def __post_init__(self):
        components = tuple(self.components)
        if not components:
            raise DistributionError("A correlated profile needs at least one component")
        object.__setattr__(self, "components", components)

    @property
    def rank(self) -> int:
        return len(self.components)

    @classmethod
    def product(cls, profile: StrategyProfileDist) -> "CorrelatedProfile":
        return cls((profile,))

    def behaviorize(self) -> "CorrelatedProfile":
        return CorrelatedProfile(tuple(
            StrategyProfileDist(tuple(MixedStrategy.of(s.behaviorize()) for s in c.per_player))
            for c in self.components
        ))

    def expand(self, cap: Optional[int] = None) -> "CorrelatedProfile":
        """Rewrite every component's per-player mixtures as separate product components."""
        cap = get_settings().expansion_cap if cap is None else cap
        total = sum(int(np.prod([len(s.components) for s in c.per_player])) for c in self.components)
        if total > cap:
            raise ScaleCapExceededError(f"Expansion needs {total} components, above the cap {cap}")
        expanded = []
        weights = []
        for c in self.components:
            for choice in itertools.product(*(range(len(s.components)) for s in c.per_player)):
                weights.append(np.prod([s.weights[b] for s, b in zip(c.per_player, choice)]))
                expanded.append(StrategyProfileDist(tuple(
                    MixedStrategy.of(s.components[b]) for s, b in zip(c.per_player, choice)
                )))
        # Uniform weights only hold when each mixture is uniform; keep the exact
        # object by checking the expansion is representable.
        weights = np.asarray(weights) / self.rank
        if not np.allclose(weights, weights[0]):
            raise DistributionError("Expansion is only uniform when every per-player mixture is uniform")
        return CorrelatedProfile(tuple(expanded))


# ---------------------------
# Evaluation
# ---------------------------

def _check_marginal(g: BayesianGame, j: int, table: np.ndarray) -> None:
    expected = (g.type_counts[j], g.action_counts[j])
    if table.shape != expected:
        raise DistributionError(f"Strategy of player {j} has shape {table.shape}, expected {expected}")


def _contract(g: BayesianGame, i: int, weight: np.ndarray, marginals: Mapping[int, np.ndarray], keep_action: bool):
    """
    sum over theta, a of weight(theta) * u_i(theta, a) * prod_j M_j(theta_j, a_j),
    leaving a_i free when keep_action is set.
    """
    m = g.m
    theta_axes = list(range(m))
    action_axes = list(range(m, 2 * m))
    operands = [weight, theta_axes, g.utilities[i], theta_axes + action_axes]
    for j, table in marginals.items():
        _check_marginal(g, j, table)
        operands += [table, [j, m + j]]
    output = [m + i] if keep_action else []
    return np.einsum(*operands, output, optimize=True)


def _opponent_marginals(g: BayesianGame, i: int, opponents) -> Dict[int, np.ndarray]:
    if isinstance(opponents, StrategyProfileDist):
        marginals = opponents.marginals()
    else:
        marginals = {j: as_mixed(s).type_marginals() for j, s in opponents.items()}
    marginals.pop(i, None)
    missing = [j for j in range(g.m) if j != i and j not in marginals]
    if missing:
        raise DistributionError(f"Missing strategies for opponents {missing}")
    return marginals


def expected_utility(g: BayesianGame, profile: Union[StrategyProfileDist, CorrelatedProfile]) -> np.ndarray:
    """E_theta E_s [u_i(theta; s(theta))] for every player i."""
    if isinstance(profile, CorrelatedProfile):
        return np.mean([expected_utility(g, c) for c in profile.components], axis=0)
    if len(profile.per_player) != g.m or any(s is None for s in profile.per_player):
        raise DistributionError(f"Profile must give a strategy for each of the {g.m} players")
    marginals = profile.marginals()
    return np.array([float(_contract(g, i, g.prior, marginals, keep_action=False)) for i in range(g.m)])


def _conditional_weight(g: BayesianGame, i: int, k: int) -> np.ndarray:
    mass = g.type_marginal(i)[k]
    if mass <= 0:
        raise ZeroProbabilityTypeError(i, k)
    weight = np.zeros_like(g.prior)
    index = [slice(None)] * g.m
    index[i] = k
    weight[tuple(index)] = g.prior[tuple(index)] / mass
    return weight


def conditional_reward_vector(g: BayesianGame, i: int, k: int, opponents) -> np.ndarray:
    """
    r(j) = E_{s_-i} E_{theta_-i ~ rho | theta_i = k} [u_i(theta; j, s_-i(theta_-i))].

    `opponents` is a StrategyProfileDist (entry i ignored) or a mapping
    from opponent index to strategy.
    """
    marginals = _opponent_marginals(g, i, opponents)
    weight = _conditional_weight(g, i, k)
    return np.asarray(_contract(g, i, weight, marginals, keep_action=True), dtype=np.float64)


def conditional_reward_table(g: BayesianGame, i: int, opponents) -> np.ndarray:
    """(K_i, n_i) table of conditional reward vectors; rows of zero-mass types are NaN."""
    marginals = _opponent_marginals(g, i, opponents)
    table = np.full((g.type_counts[i], g.action_counts[i]), np.nan)
    for k in g.positive_types(i):
        table[k] = _contract(g, i, _conditional_weight(g, i, k), marginals, keep_action=True)
    return table


def default_sample_count(g: BayesianGame, epsilon: float, constant: Optional[float] = None) -> int:
    """ceil(c * log(m n K / eps) / eps^2)."""
    c = get_settings().sample_constant if constant is None else constant
    return int(math.ceil(c * math.log(g.m * g.max_actions * g.max_types / epsilon) / epsilon ** 2))


def sampled_reward_vector(
    g: BayesianGame,
    i: int,
    k: int,
    opponents,
    sample_count: int,
    rng_state: np.random.Generator,
) -> np.ndarray:
    """Monte Carlo estimate of conditional_reward_vector from `sample_count` joint draws."""
    if sample_count < 1:
        raise ValueError(f"sample_count must be >= 1, got {sample_count}")
    marginals = _opponent_marginals(g, i, opponents)
    cond = g.conditional_prior(i, k)
    others = [j for j in range(g.m) if j != i]
    flat = sample_many(cond, rng_state, sample_count)
    theta_others = np.unravel_index(flat, cond.shape) if others else ()
    theta = []
    actions = []
    for j in range(g.m):
        if j == i:
            theta.append(np.full(sample_count, k))
            continue
        theta_j = theta_others[others.index(j)]
        theta.append(theta_j)
        actions.append(sample_rows(marginals[j][theta_j], rng_state))
    u = np.moveaxis(g.utilities[i], g.m + i, -1)
    values = u[tuple(theta) + tuple(actions)]
    return values.mean(axis=0)
