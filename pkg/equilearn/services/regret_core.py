"""
Online learning primitives: multiplicative weights (full-information
experts with rewards in [0, B]) and the aggregating algorithm for online
density estimation with a finite class of experts.

Both states are value-semantic; updates return a new state.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from typing import List, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from equilearn.config import get_settings
from equilearn.exceptions import (
    DistributionError,
    PosteriorCollapseError,
    RewardRangeError,
    ScaleCapExceededError,
)
from equilearn.services.finite_dist import FiniteDist, sample

logger = logging.getLogger(__name__)


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


def _softmax(logits: np.ndarray) -> np.ndarray:
    # logsumexp subtracts the max internally, so large logits cannot overflow
    p = np.exp(logits - logsumexp(logits))
    return p / p.sum()


# ---------------------------
# Multiplicative weights
# ---------------------------

@dataclass(frozen=True, eq=False)
class MwuState:
    n: int
    eta: float
    bound: float = 1.0
    cumulative_rewards: np.ndarray = None
    round: int = 1

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"MWU needs at least one action, got n={self.n}")
        if not self.eta > 0:
            raise ValueError(f"Learning rate must be positive, got {self.eta}")
        if not self.bound > 0:
            raise ValueError(f"Reward bound must be positive, got {self.bound}")
        cumulative = np.zeros(self.n) if self.cumulative_rewards is None else self.cumulative_rewards
        object.__setattr__(self, "cumulative_rewards", _frozen(cumulative))
        if self.cumulative_rewards.shape != (self.n,):
            raise ValueError(f"Cumulative rewards must have shape ({self.n},)")


def mwu_distribution(s: MwuState) -> FiniteDist:
    """p_t(i) proportional to exp(eta * sum of past rewards of i)."""
    return FiniteDist(_softmax(s.eta * s.cumulative_rewards))


def mwu_update(s: MwuState, reward) -> MwuState:
    reward = np.asarray(reward, dtype=np.float64)
    if reward.shape != (s.n,):
        raise RewardRangeError(f"Reward vector has shape {reward.shape}, expected ({s.n},)")
    slack = get_settings().normalization_tol * max(1.0, s.bound)
    if not np.all(np.isfinite(reward)) or np.any(reward < -slack) or np.any(reward > s.bound + slack):
        bad = int(np.argmax(~np.isfinite(reward) | (reward < -slack) | (reward > s.bound + slack)))
        raise RewardRangeError(f"Reward entry {bad} = {float(reward[bad])!r} outside [0, {s.bound}]")
    return replace(s, cumulative_rewards=s.cumulative_rewards + reward, round=s.round + 1)


def mwu_default_eta(n: int, T: int, B: float = 1.0) -> float:
    """sqrt(ln(n) / T) / B, the rate behind the 2B sqrt(T ln n) regret bound."""
    if n < 2 or T < 1 or not B > 0:
        raise ValueError(f"Need n >= 2, T >= 1, B > 0; got n={n}, T={T}, B={B}")
    return math.sqrt(math.log(n) / T) / B


def mwu_regret_bound(n: int, T: int, B: float = 1.0) -> float:
    return 2.0 * B * math.sqrt(T * math.log(n))


def mwu_external_regret(distributions, rewards) -> float:
    """max_i sum_t r_t(i) - sum_t <p_t, r_t> for (T, n) arrays."""
    p = np.asarray(distributions, dtype=np.float64)
    r = np.asarray(rewards, dtype=np.float64)
    if p.shape != r.shape:
        raise ValueError(f"Distributions {p.shape} and rewards {r.shape} disagree")
    return float(r.sum(axis=0).max() - np.einsum("tn,tn->", p, r))


def mwu_play(rewards, eta: float, B: float = 1.0) -> np.ndarray:
    """Run MWU against a fixed reward sequence; returns the (T, n) played distributions."""
    rewards = np.asarray(rewards, dtype=np.float64)
    state = MwuState(rewards.shape[1], eta, B)
    played = np.empty_like(rewards)
    for t, r in enumerate(rewards):
        played[t] = mwu_distribution(state).probs
        state = mwu_update(state, r)
    return played


# ---------------------------
# Aggregating algorithm
# ---------------------------

@dataclass(frozen=True, eq=False)
class VovkState:
    expert_count: int
    cumulative_log_loss: np.ndarray = None
    round: int = 1

    def __post_init__(self):
        if self.expert_count < 1:
            raise ValueError("Need at least one expert")
        loss = np.zeros(self.expert_count) if self.cumulative_log_loss is None else self.cumulative_log_loss
        object.__setattr__(self, "cumulative_log_loss", _frozen(loss))
        if self.cumulative_log_loss.shape != (self.expert_count,):
            raise ValueError(f"Log-loss vector must have shape ({self.expert_count},)")

    def log_weights(self) -> np.ndarray:
        """Normalized log posterior; eliminated experts are -inf."""
        logits = -self.cumulative_log_loss
        total = logsumexp(logits)
        if not np.isfinite(total):
            raise PosteriorCollapseError()
        return logits - total

    def posterior(self) -> FiniteDist:
        q = np.exp(self.log_weights())
        return FiniteDist(q / q.sum())


def vovk_update(s: VovkState, likelihoods) -> VovkState:
    """Charge every expert log(1 / likelihood of the observed outcome)."""
    lik = np.asarray(likelihoods, dtype=np.float64)
    if lik.shape != (s.expert_count,):
        raise DistributionError(f"Expected {s.expert_count} likelihoods, got shape {lik.shape}")
    tol = get_settings().normalization_tol
    if not np.all(np.isfinite(lik)) or np.any(lik < 0) or np.any(lik > 1 + tol):
        raise DistributionError("Likelihoods must lie in [0, 1]")
    with np.errstate(divide="ignore"):
        loss = s.cumulative_log_loss - np.log(np.minimum(lik, 1.0))
    if np.all(np.isinf(loss)):
        raise PosteriorCollapseError()
    return replace(s, cumulative_log_loss=loss, round=s.round + 1)


def vovk_predict(s: VovkState, expert_predictions: Sequence[FiniteDist]) -> FiniteDist:
    """Posterior-weighted mixture of the experts' predictions."""
    if len(expert_predictions) != s.expert_count:
        raise DistributionError(f"Expected {s.expert_count} predictions, got {len(expert_predictions)}")
    sizes = {p.size for p in expert_predictions}
    if len(sizes) != 1:
        raise DistributionError(f"Expert predictions disagree on outcome domain: sizes {sorted(sizes)}")
    q = s.posterior().probs
    mix = np.tensordot(q, np.stack([p.probs for p in expert_predictions]), axes=1)
    return FiniteDist(mix / mix.sum(), expert_predictions[0].shape)


@dataclass
class VovkRun:
    predictions: np.ndarray
    state: VovkState
    contexts: List[int] = field(default_factory=list)
    outcomes: List[int] = field(default_factory=list)


def vovk_run(expert_tables, contexts: Sequence[int], outcomes: Sequence[int]) -> VovkRun:
    """
    Replay a context/outcome sequence.

    expert_tables has shape (T', C, O): expert i predicts expert_tables[i, c]
    in context c. Returns the aggregated prediction made before each outcome.
    """
    tables = np.asarray(expert_tables, dtype=np.float64)
    if len(contexts) != len(outcomes):
        raise ValueError("contexts and outcomes must have equal length")
    state = VovkState(tables.shape[0])
    predictions = np.empty((len(contexts), tables.shape[2]))
    for h, (c, o) in enumerate(zip(contexts, outcomes)):
        mix = state.posterior().probs @ tables[:, c]
        predictions[h] = mix / mix.sum()
        state = vovk_update(state, tables[:, c, o])
    return VovkRun(predictions, state, list(contexts), list(outcomes))


def realizable_sequence(
    expert_tables,
    true_expert: int,
    horizon: int,
    rng_state: np.random.Generator,
) -> Tuple[List[int], List[int]]:
    """Uniform contexts with outcomes drawn from `true_expert`."""
    tables = np.asarray(expert_tables, dtype=np.float64)
    contexts = [int(c) for c in rng_state.integers(tables.shape[1], size=horizon)]
    outcomes = [sample(FiniteDist(tables[true_expert, c]), rng_state) for c in contexts]
    return contexts, outcomes


def average_tv_to_truth(run: VovkRun, expert_tables, true_expert: int) -> float:
    """(1/H) sum_h TV(aggregated prediction, true expert's prediction)."""
    tables = np.asarray(expert_tables, dtype=np.float64)
    truth = tables[true_expert, run.contexts]
    return float(0.5 * np.abs(run.predictions - truth).sum(axis=1).mean())


def vovk_tv_bound(expert_count: int, horizon: int) -> float:
    return math.sqrt(math.log(expert_count) / horizon)


# ---------------------------
# Swap regret over weighted rounds
# ---------------------------

def exhaustive_swap_assignment(masses, rewards, source_actions, cap: int = None) -> Tuple[float, np.ndarray]:
    """
    max over phi of sum_c sum_s masses[c, s] * (rewards[c, phi(s)] - rewards[c, source_actions[s]]),
    found by listing every map from source strategies to actions.
    """
    masses = np.asarray(masses, dtype=np.float64)
    rewards = np.asarray(rewards, dtype=np.float64)
    source_actions = np.asarray(source_actions, dtype=np.intp)
    sources, n = masses.shape[1], rewards.shape[1]
    cap = get_settings().swap_function_cap if cap is None else cap
    if n ** sources > cap:
        raise ScaleCapExceededError(f"{n}^{sources} swap functions exceed the enumeration cap {cap}")
    gains = masses.T @ rewards
    rows = np.arange(sources)
    baseline = gains[rows, source_actions].sum()
    best_value, best_phi = -np.inf, None
    for phi in itertools.product(range(n), repeat=sources):
        value = gains[rows, list(phi)].sum() - baseline
        if value > best_value:
            best_value, best_phi = value, np.array(phi)
    return float(best_value), best_phi


@dataclass
class SwapAssignment:
    """
    Best swap value over a set of source strategies, with the changed
    sources of largest contribution (largest first, enumeration order on ties).
    """
    gain: float
    changed: int
    sources: np.ndarray        # (E, K) action per type of each kept source
    targets: np.ndarray        # action played at the swapped type instead
    contributions: np.ndarray

    @classmethod
    def from_gains(cls, gain: float, actions: np.ndarray, gains: np.ndarray, targets: np.ndarray, k: int, keep: int) -> "SwapAssignment":
        rows = np.arange(actions.shape[0])
        contributions = gains[rows, targets] - gains[rows, actions[:, k]]
        better = np.flatnonzero(contributions > 0)
        order = better[np.argsort(-contributions[better], kind="stable")[:keep]]
        return cls(gain, int(better.size), actions[order], targets[order], contributions[order])

    def merge(self, other: "SwapAssignment", keep: int) -> "SwapAssignment":
        contributions = np.concatenate([self.contributions, other.contributions])
        order = np.argsort(-contributions, kind="stable")[:keep]
        return SwapAssignment(
            self.gain + other.gain,
            self.changed + other.changed,
            np.concatenate([self.sources, other.sources])[order],
            np.concatenate([self.targets, other.targets])[order],
            contributions[order],
        )

    def describe(self) -> dict:
        return {
            "swap": [
                {"from": [int(a) for a in s], "to": int(t), "gain": float(c)}
                for s, t, c in zip(self.sources, self.targets, self.contributions)
            ],
            "changed_sources": self.changed,
        }


def _support_product(supports: Sequence[np.ndarray], start: int, stop: int) -> np.ndarray:
    """Rows start..stop-1 of the row-major product of per-type supports, as (rows, K) actions."""
    index = np.arange(start, stop)
    columns = []
    # mixed radix, last type fastest
    for s in reversed(supports):
        index, digit = np.divmod(index, len(s))
        columns.append(s[digit])
    return np.stack(columns[::-1], axis=1)


def product_swap_assignment(
    tables,
    weights,
    rewards,
    k: int,
    cap: int = None,
    keep: int = 8,
    chunk: int = 4096,
) -> SwapAssignment:
    """
    max over phi of sum_r sum_s m_r(s) * (rewards[r, phi(s)] - rewards[r, s(k)]),
    where row r puts mass m_r(s) = weights[r] * prod_k' tables[r, k', s(k')]
    on the source strategy s.

    The objective separates over s, so phi(s) is the argmax of the
    mass-weighted reward sum; ties go to the lowest action. Zero-mass
    sources contribute nothing, so only positive-mass ones are scanned: the
    union of the rows' supports or the product of the per-type supports,
    whichever is smaller. Sources are streamed in blocks of `chunk`.
    """
    tables = np.asarray(tables, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    rewards = np.asarray(rewards, dtype=np.float64)
    live = weights > 0
    tables, weights, rewards = tables[live], weights[live], rewards[live]
    num_types = tables.shape[1]
    positive = tables > 0

    row_supports = [[np.flatnonzero(row) for row in table] for table in positive]
    union_bound = sum(math.prod(len(s) for s in supports) for supports in row_supports)
    type_supports = [np.flatnonzero(row) for row in positive.any(axis=0)]
    product_size = math.prod(len(s) for s in type_supports)
    cap = get_settings().decomposition_cap if cap is None else cap
    scanned = min(union_bound, product_size)
    if scanned > cap:
        raise ScaleCapExceededError(
            f"{scanned} positive-mass source strategies exceed the decomposition cap {cap}"
        )

    if union_bound < product_size:
        listed = np.unique(np.concatenate([
            _support_product(supports, 0, math.prod(len(s) for s in supports)) for supports in row_supports
        ]), axis=0)
        blocks = (listed[a:a + chunk] for a in range(0, listed.shape[0], chunk))
    else:
        blocks = (
            _support_product(type_supports, a, min(a + chunk, product_size))
            for a in range(0, product_size, chunk)
        )

    empty = np.empty(0)
    result = SwapAssignment(0.0, 0, np.empty((0, num_types), dtype=np.intp), empty.astype(np.intp), empty)
    for actions in blocks:
        mass = weights[:, None] * tables[:, 0, actions[:, 0]]
        for t in range(1, num_types):
            mass = mass * tables[:, t, actions[:, t]]
        gains = mass.T @ rewards
        targets = np.argmax(gains, axis=1)
        rows = np.arange(actions.shape[0])
        block_gain = float((gains[rows, targets] - gains[rows, actions[:, k]]).sum())
        result = result.merge(SwapAssignment.from_gains(block_gain, actions, gains, targets, k, keep), keep)
    result.gain = max(result.gain, 0.0)
    logger.debug(f"Swap assignment over {scanned} source strategies: gain {result.gain:.6g}")
    return result
