import logging
from typing import Optional

from equilearn.commands.files import write_text
from equilearn.config import get_settings
from equilearn.dependencies import make_rng
from equilearn.exceptions import ScaleCapExceededError
from equilearn.models.experiment import ExperimentConfig
from equilearn.models.game_file import load_game, load_mixture
from equilearn.models.reports import BneCandidate, MixtureOfProducts, ReductionReport
from equilearn.services.bayes_game import BayesianGame, StrategyProfileDist
from equilearn.services.efg_gadget import (
    EfgBehaviorProfile,
    RankTCce,
    default_horizon,
    kibitzer_deviation_utility,
    profile_from_dynamics,
    reduction_extract_bne,
)
from equilearn.services.multiscale_dynamics import DynamicsParams, run_dynamics

logger = logging.getLogger(__name__)

NAME = "reduction"
HELP = "Extract a 16*eps Bayes-Nash equilibrium from a rank-T profile of the repeated gadget"

EXIT_BUDGET_EXHAUSTED = 4


def _candidate(profile: Optional[StrategyProfileDist], gain: float, depth: Optional[int]) -> Optional[BneCandidate]:
    if profile is None:
        return None
    return BneCandidate(
        history_length=depth or 0,
        worst_gain=gain,
        strategies=[s.type_marginals().tolist() for s in profile.per_player],
        mixtures=[
            MixtureOfProducts(weights=s.weights.tolist(), tables=[c.table.tolist() for c in s.components])
            for s in profile.per_player
        ],
    )


def build_profile(config: ExperimentConfig, g: BayesianGame) -> RankTCce:
    """From --mu when given, else from the last --T-rank days of a dynamics run."""
    if config.mu is not None:
        mixture = load_mixture(config.mu)
        kibitzer = mixture.kibitzer or [None] * len(mixture.components)
        return RankTCce(tuple(
            EfgBehaviorProfile.stationary(g, tables, k) for tables, k in zip(mixture.tables(g), kibitzer)
        ))
    params = DynamicsParams.from_epsilon(config.epsilon, g.max_actions)
    cap = get_settings().expansion_cap
    if params.T > cap:
        raise ScaleCapExceededError(
            f"Dynamics at eps={config.epsilon} need T={params.T} days, above the expansion cap {cap}; pass --mu instead"
        )
    trace = run_dynamics(g, params, config.seed)
    mu = profile_from_dynamics(g, trace)
    if config.t_rank is not None:
        mu = RankTCce(mu.components[-config.t_rank:])
    return mu


def handle(config: ExperimentConfig) -> int:
    g = load_game(config.game)
    mu = build_profile(config, g)
    H = config.H if config.H is not None else default_horizon(mu.rank, config.epsilon)
    if config.H is None:
        logger.info(f"Using H={H} gadget repetitions for T={mu.rank} at eps={config.epsilon}")
    result = reduction_extract_bne(g, H, mu, config.epsilon, config.budget, make_rng(config.seed, 0))

    report = ReductionReport(
        ok=result.success,
        epsilon=config.epsilon,
        threshold=result.threshold,
        H=H,
        rank=mu.rank,
        gadgets_visited=result.gadgets_visited,
        bne=_candidate(result.profile, result.worst_gain, result.history_length) if result.success else None,
        best_candidate=None if result.success else _candidate(
            result.best_profile, result.best_gain, result.best_history_length
        ),
        message=None if result.success else f"budget of {config.budget} gadgets exhausted",
    )
    deviation = kibitzer_deviation_utility(g, H, mu, config.epsilon, config.rollouts, make_rng(config.seed, 1))
    report.kibitzer_deviation = deviation.estimate
    logger.info(
        f"Kibitzer deviation value {deviation.estimate.mean[2]:.6g} "
        f"(stderr {deviation.estimate.stderr[2]:.3g}, {deviation.bne_gadgets} gadgets already at a BNE)"
    )

    text = report.model_dump_json(indent=2, exclude_none=True)
    write_text(config.out / "reduction.json", text)
    print(text)
    if not result.success:
        logger.error(report.message)
        return EXIT_BUDGET_EXHAUSTED
    return 0
