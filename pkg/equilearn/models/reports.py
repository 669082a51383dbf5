from pydantic import BaseModel, Field
from typing import Optional, Dict, Any, List, Union


# ---------------------------
# Equilibrium checks
# ---------------------------

class Witness(BaseModel):
    player: int
    type_index: Union[int, str]   # a type index, or "ex-ante"
    gain: float
    deviation: Dict[str, Any] = {}  # e.g. {"swap": [{"from": [0, 1], "to": 3, "gain": 0.4}]} or {"action": 2}


class EquilibriumReport(BaseModel):
    notion: str
    epsilon: float
    satisfied: bool
    worst_gain: float
    witness: Optional[Witness] = None
    gains: List[List[Optional[float]]] = []  # per player, per type (None for zero-mass types)


# ---------------------------
# Dynamics runs
# ---------------------------

class SkippedSwapCell(BaseModel):
    player: int
    type_index: int
    reason: str


class RunSummary(BaseModel):
    ok: bool = True
    seed: int
    epsilon: float
    H: int
    L: int
    T: int
    reward_mode: str
    expected_utility: List[float]
    max_thread_regret_ratio: float = Field(description="max over restarts of regret / bound")
    max_swap_regret_per_day: float
    bound_violations: int = 0
    skipped_swap_cells: List[SkippedSwapCell] = []
    equilibrium: Optional[EquilibriumReport] = None
    equilibrium_skipped: Optional[str] = None  # reason the every-type check did not run


# ---------------------------
# Reduction
# ---------------------------

class UtilityEstimate(BaseModel):
    mean: List[float]
    stderr: List[float]
    rollouts: int


class MixtureOfProducts(BaseModel):
    weights: List[float]
    tables: List[List[List[float]]]  # one (K_i, n_i) behavior strategy per weight


class BneCandidate(BaseModel):
    history_length: int
    worst_gain: float
    strategies: List[List[List[float]]]  # per player (K_i, n_i) type marginals
    mixtures: List[MixtureOfProducts] = []  # per player, the posterior-weighted component strategies


class ReductionReport(BaseModel):
    ok: bool
    epsilon: float
    threshold: float
    H: int
    rank: int
    gadgets_visited: int
    bne: Optional[BneCandidate] = None
    best_candidate: Optional[BneCandidate] = None
    kibitzer_deviation: Optional[UtilityEstimate] = None
    message: Optional[str] = None


class AppendixReport(BaseModel):
    n: int
    window: float
    ce_gain: float
    behaviorized_gain: float
    behaviorized_best_gain: float
