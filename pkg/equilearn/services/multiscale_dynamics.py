"""
Multi-scale MWU dynamics for Bayesian games.

Each player runs L threads. Thread l keeps one MWU learner per type, holds
its behavior strategy fixed on aligned windows of H^(l-1) days, feeds the
learners the rewards summed over each window and restarts them every
H^l days. The player plays the uniform mixture of its L thread strategies.
Players are uncoupled: the runner only passes them reward tables computed
from the mixtures everybody published that day.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from equilearn.dependencies import make_rng, ordered_map
from equilearn.exceptions import DistributionError, ScaleCapExceededError, ZeroProbabilityTypeError
from equilearn.models.reports import SkippedSwapCell
from equilearn.services.bayes_game import (
    BayesianGame,
    BehaviorStrategy,
    CorrelatedProfile,
    MixedStrategy,
    StrategyProfileDist,
    conditional_reward_table,
    sampled_reward_vector,
)
from equilearn.services.regret_core import (
    MwuState,
    exhaustive_swap_assignment,
    mwu_distribution,
    mwu_update,
    product_swap_assignment,
)

logger = logging.getLogger(__name__)

EXACT = "exact"
SAMPLED = "sampled"


@dataclass(frozen=True)
class DynamicsParams:
    epsilon: float
    n: int
    H: int
    L: int
    T: int
    reward_mode: str = EXACT
    sample_count: Optional[int] = None

    def __post_init__(self):
        if not 0 < self.epsilon <= 1:
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if self.H < 2 or self.L < 1:
            raise ValueError(f"Need H >= 2 and L >= 1, got H={self.H}, L={self.L}")
        if self.T != self.H ** self.L:
            raise ValueError(f"T must equal H^L = {self.H ** self.L}, got {self.T}")
        if self.reward_mode not in (EXACT, SAMPLED):
            raise ValueError(f"Unknown reward mode {self.reward_mode!r}")
        if self.reward_mode == SAMPLED and not (self.sample_count or 0) >= 1:
            raise ValueError("Sampled rewards need sample_count >= 1")

    @classmethod
    def from_epsilon(
        cls,
        epsilon: float,
        n: int,
        H: Optional[int] = None,
        L: Optional[int] = None,
        reward_mode: str = EXACT,
        sample_count: Optional[int] = None,
    ) -> "DynamicsParams":
        """
        H = ceil(ln(n)/eps^2) and L = ceil(1/eps) unless overridden. Overrides
        must keep H >= ln(n)/eps^2 and L >= 1/eps.
        """
        if not 0 < epsilon <= 1:
            raise ValueError(f"epsilon must lie in (0, 1], got {epsilon}")
        n = max(int(n), 2)
        h_min = math.log(n) / epsilon ** 2
        l_min = 1.0 / epsilon
        if H is None:
            H = max(2, math.ceil(h_min))
        elif H < h_min:
            raise ValueError(f"H={H} is below ln(n)/eps^2 = {h_min:.4f}")
        if L is None:
            L = math.ceil(l_min - 1e-12)
        elif L < l_min - 1e-12:
            raise ValueError(f"L={L} is below 1/eps = {l_min:.4f}")
        return cls(epsilon, n, int(H), int(L), int(H) ** int(L), reward_mode, sample_count)

    @property
    def shrink(self) -> float:
        """sqrt(ln(n)/H), at most epsilon."""
        return math.sqrt(math.log(self.n) / self.H)

    def block(self, ell: int) -> int:
        """Window length H^(ell-1) over which thread ell holds its strategy."""
        return self.H ** (ell - 1)

    def eta(self, ell: int) -> float:
        return self.shrink / self.block(ell)

    def thread_regret_bound(self, ell: int) -> float:
        """2 sqrt(H ln n) H^(ell-1) per restart."""
        return 2.0 * math.sqrt(self.H * math.log(self.n)) * self.block(ell)

    def swap_regret_bound(self) -> float:
        """T (1/L + 2 sqrt(ln(n)/H)), never above 3 eps T."""
        return self.T * (1.0 / self.L + 2.0 * self.shrink)


def schedule_index(t: int, ell: int, H: int, T: Optional[int] = None) -> Tuple[int, int]:
    """(restart index beta, round h within the restart) of 1-based day t for thread ell."""
    if t < 1 or (T is not None and t > T):
        raise ValueError(f"Day {t} out of range [1, {T}]")
    if ell < 1 or H < 1:
        raise ValueError(f"Need ell >= 1 and H >= 1, got ell={ell}, H={H}")
    span = H ** ell
    beta = -(-t // span)
    h = -(-(t - (beta - 1) * span) // H ** (ell - 1))
    return beta, h


class PlayerLearner:
    """One player's L threads of per-type MWU learners."""

    def __init__(self, player: int, num_types: int, num_actions: int, params: DynamicsParams):
        self.player = player
        self.num_types = num_types
        self.num_actions = num_actions
        self.params = params
        self.day = 1
        self._states = [self._fresh(ell) for ell in range(1, params.L + 1)]
        self._pending = [np.zeros((num_types, num_actions)) for _ in range(params.L)]
        self._tables = [self._thread_table(states) for states in self._states]

    def _fresh(self, ell: int) -> List[MwuState]:
        return [
            MwuState(self.num_actions, self.params.eta(ell), float(self.params.block(ell)))
            for _ in range(self.num_types)
        ]

    @staticmethod
    def _thread_table(states: List[MwuState]) -> np.ndarray:
        return np.stack([mwu_distribution(s).probs for s in states])

    def thread_tables(self) -> np.ndarray:
        """(L, K, n): the product strategy q_(t, l) of every thread today."""
        return np.stack(self._tables)

    def mixture(self) -> MixedStrategy:
        return MixedStrategy.uniform_mixture([BehaviorStrategy(table) for table in self._tables])

    def observe(self, rewards: np.ndarray) -> None:
        """Receive today's (K, n) reward table and advance to the next day."""
        t = self.day
        for idx in range(self.params.L):
            ell = idx + 1
            self._pending[idx] += rewards
            beta, h = schedule_index(t, ell, self.params.H)
            # last day of round h of restart beta
            if t == (beta - 1) * self.params.H ** ell + h * self.params.block(ell):
                self._states[idx] = [mwu_update(s, r) for s, r in zip(self._states[idx], self._pending[idx])]
                self._pending[idx][:] = 0.0
                if h == self.params.H:
                    self._states[idx] = self._fresh(ell)
                self._tables[idx] = self._thread_table(self._states[idx])
        self.day += 1


LearnerFactory = Callable[[int, int, int, DynamicsParams], PlayerLearner]


@dataclass
class DynamicsTrace:
    """
    strategies[i]: (T, L, K_i, n_i) thread strategies played on each day.
    rewards[i]:    (T, K_i, n_i) reward vectors, rescaled to [0, 1].
    """
    params: DynamicsParams
    type_counts: Tuple[int, ...]
    action_counts: Tuple[int, ...]
    strategies: List[np.ndarray] = field(default_factory=list)
    rewards: List[np.ndarray] = field(default_factory=list)
    seed: int = 0
    reward_bounds: Tuple[float, float] = (0.0, 1.0)

    @property
    def days(self) -> int:
        return self.strategies[0].shape[0] if self.strategies else 0

    def mixture(self, i: int, t: int) -> MixedStrategy:
        """Player i's played mixture on 1-based day t."""
        return MixedStrategy.uniform_mixture([BehaviorStrategy(q) for q in self.strategies[i][t - 1]])

    def day_profile(self, t: int) -> StrategyProfileDist:
        return StrategyProfileDist(tuple(self.mixture(i, t) for i in range(len(self.strategies))))


def _reward_table(g: BayesianGame, i: int, profile: StrategyProfileDist, params: DynamicsParams, rng_seed, day: int):
    if params.reward_mode == EXACT:
        table = conditional_reward_table(g, i, profile)
    else:
        rng = make_rng(rng_seed, i, day)
        table = np.stack([
            sampled_reward_vector(g, i, k, profile, params.sample_count, rng)
            for k in range(g.type_counts[i])
        ])
    low, high = g.payoff_bounds
    return np.clip((table - low) / (high - low), 0.0, 1.0)


def run_dynamics(
    g: BayesianGame,
    params: DynamicsParams,
    seed: int,
    learner_factory: LearnerFactory = PlayerLearner,
) -> DynamicsTrace:
    """Run all m players uncoupled for T = H^L days."""
    for i in range(g.m):
        marginal = g.type_marginal(i)
        for k in range(g.type_counts[i]):
            if marginal[k] <= 0:
                raise ZeroProbabilityTypeError(i, k)
    logger.info(
        f"Running dynamics: m={g.m}, types={g.type_counts}, actions={g.action_counts}, "
        f"eps={params.epsilon}, H={params.H}, L={params.L}, T={params.T}, rewards={params.reward_mode}"
    )
    learners = [learner_factory(i, g.type_counts[i], g.action_counts[i], params) for i in range(g.m)]
    strategies = [np.empty((params.T, params.L, g.type_counts[i], g.action_counts[i])) for i in range(g.m)]
    rewards = [np.empty((params.T, g.type_counts[i], g.action_counts[i])) for i in range(g.m)]

    for t in range(1, params.T + 1):
        # every player publishes today's mixture before anyone observes rewards
        profile = StrategyProfileDist(tuple(learner.mixture() for learner in learners))
        for i, learner in enumerate(learners):
            strategies[i][t - 1] = learner.thread_tables()
        tables = ordered_map(lambda i: _reward_table(g, i, profile, params, seed, t), range(g.m))
        for i, learner in enumerate(learners):
            rewards[i][t - 1] = tables[i]
            learner.observe(tables[i])
        if t % max(1, params.T // 10) == 0:
            logger.debug(f"Dynamics day {t}/{params.T}")

    logger.info(f"Dynamics finished after {params.T} days")
    return DynamicsTrace(
        params=params,
        type_counts=g.type_counts,
        action_counts=g.action_counts,
        strategies=strategies,
        rewards=rewards,
        seed=seed,
        reward_bounds=tuple(g.payoff_bounds),
    )


# ---------------------------
# Measurements on a trace
# ---------------------------

def empirical_distribution(trace: DynamicsTrace) -> CorrelatedProfile:
    """mu = (1/T) sum_t prod_i p_t^(i), one product component per day."""
    return CorrelatedProfile(tuple(trace.day_profile(t) for t in range(1, trace.days + 1)))


def empirical_marginal(trace: DynamicsTrace, i: int) -> MixedStrategy:
    """Player i's marginal of mu: uniform over all T*L thread-day behavior strategies."""
    tables = trace.strategies[i].reshape((-1,) + trace.strategies[i].shape[2:])
    return MixedStrategy.uniform_mixture([BehaviorStrategy(q) for q in tables])


def restart_days(params: DynamicsParams, ell: int, beta: int) -> slice:
    span = params.H ** ell
    if not 1 <= beta <= params.T // span:
        raise ValueError(f"Restart {beta} out of range for thread {ell}")
    return slice((beta - 1) * span, beta * span)


def thread_external_regret(trace: DynamicsTrace, i: int, ell: int, beta: int, k: int) -> float:
    """
    max_j sum_t r_(t,k)(j) - sum_t <w_(t,l,k), r_(t,k)> over the days of restart beta.
    """
    if not 1 <= ell <= trace.params.L:
        raise ValueError(f"Thread {ell} out of range [1, {trace.params.L}]")
    days = restart_days(trace.params, ell, beta)
    r = trace.rewards[i][days, k]
    w = trace.strategies[i][days, ell - 1, k]
    return float(r.sum(axis=0).max() - np.einsum("tn,tn->", w, r))


def thread_pure_masses(trace: DynamicsTrace, i: int, cap: Optional[int] = None) -> np.ndarray:
    """(T, n^K) probability of every pure strategy under each day's thread mixture."""
    return np.stack([trace.mixture(i, t).pure_masses(cap) for t in range(1, trace.days + 1)])


def source_actions(num_types: int, num_actions: int, k: int) -> np.ndarray:
    """s(k) for every pure strategy s in row-major order."""
    size = num_actions ** num_types
    return np.unravel_index(np.arange(size), (num_actions,) * num_types)[k]


def per_type_swap_regret(trace: DynamicsTrace, i: int, k: int, method: str = "decomposition") -> float:
    """
    max over swap functions phi of sum_t sum_s p_t(s) (r_(t,k)(phi(s)(k)) - r_(t,k)(s(k))).

    Only phi(s)(k) enters the objective. "decomposition" picks it per
    positive-mass source strategy, with every (day, thread) strategy kept as
    a product of its type rows; "exhaustive" lists every map from S_i to A_i.
    """
    K, n = trace.type_counts[i], trace.action_counts[i]
    rewards = trace.rewards[i][:, k]
    if method == "decomposition":
        T, L = trace.strategies[i].shape[:2]
        tables = trace.strategies[i].reshape((T * L, K, n))
        return product_swap_assignment(tables, np.full(T * L, 1.0 / L), np.repeat(rewards, L, axis=0), k).gain
    if method != "exhaustive":
        raise ValueError(f"Unknown swap-regret method {method!r}")
    value, _ = exhaustive_swap_assignment(thread_pure_masses(trace, i), rewards, source_actions(K, n, k))
    return value


def swap_regret_chain_bound(trace: DynamicsTrace, i: int, k: int) -> float:
    """(1/L) sum_t max_j r_(t,k)(j) + 2 T sqrt(ln(n)/H)."""
    p = trace.params
    best = trace.rewards[i][:, k].max(axis=1).sum()
    return float(best / p.L + 2.0 * p.T * p.shrink)


@dataclass
class RegretRecord:
    kind: str
    player: int
    type_index: int
    thread: Optional[int]
    restart: Optional[int]
    regret: float
    bound: float

    @property
    def within_bound(self) -> bool:
        return self.regret <= self.bound + 1e-9


def regret_records(trace: DynamicsTrace, skipped: Optional[List[SkippedSwapCell]] = None) -> List[RegretRecord]:
    """
    Every per-restart external regret and per-type swap regret, with its
    bound. Swap cells over the decomposition cap are left out and appended
    to `skipped` when given.
    """
    p = trace.params
    records: List[RegretRecord] = []
    for i in range(len(trace.strategies)):
        for ell in range(1, p.L + 1):
            for beta in range(1, p.T // p.H ** ell + 1):
                for k in range(trace.type_counts[i]):
                    records.append(RegretRecord(
                        "thread_external", i, k, ell, beta,
                        thread_external_regret(trace, i, ell, beta, k), p.thread_regret_bound(ell),
                    ))
        for k in range(trace.type_counts[i]):
            try:
                value = per_type_swap_regret(trace, i, k)
            except ScaleCapExceededError as e:
                logger.warning(f"Skipping swap regret of player {i} type {k}: {e}")
                if skipped is not None:
                    skipped.append(SkippedSwapCell(player=i, type_index=k, reason=str(e)))
                continue
            bound = min(swap_regret_chain_bound(trace, i, k), 3 * p.epsilon * p.T)
            records.append(RegretRecord("type_swap", i, k, None, None, value, bound))
    return records


def assert_trace_consistent(trace: DynamicsTrace) -> None:
    """Thread l's strategy must be constant on every aligned H^(l-1) window."""
    p = trace.params
    for i, strategies in enumerate(trace.strategies):
        for ell in range(2, p.L + 1):
            windows = strategies[:, ell - 1].reshape((p.T // p.block(ell), p.block(ell)) + strategies.shape[2:])
            if not np.all(windows == windows[:, :1]):
                raise DistributionError(f"Thread {ell} of player {i} changed inside a window")
