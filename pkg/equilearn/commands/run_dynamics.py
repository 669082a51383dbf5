import logging
from typing import List, Optional

from equilearn.commands.files import write_csv, write_text
from equilearn.exceptions import BoundViolationError, ScaleCapExceededError
from equilearn.models.experiment import ExperimentConfig
from equilearn.models.game_file import load_game
from equilearn.models.reports import EquilibriumReport, RunSummary, SkippedSwapCell
from equilearn.services.bayes_game import default_sample_count, expected_utility
from equilearn.services.equilibrium_check import check_every_type_nfce
from equilearn.services.multiscale_dynamics import (
    SAMPLED,
    DynamicsParams,
    DynamicsTrace,
    PlayerLearner,
    empirical_distribution,
    regret_records,
    run_dynamics,
)

logger = logging.getLogger(__name__)

NAME = "run-dynamics"
HELP = "Run multi-scale MWU on a Bayesian game and write trace, regret and summary files"

# Tests swap this for a broken learner to exercise --assert-bounds
learner_factory = PlayerLearner


def trace_rows(trace: DynamicsTrace):
    for t in range(trace.days):
        for i, strategies in enumerate(trace.strategies):
            day = strategies[t]
            for ell in range(day.shape[0]):
                for k in range(day.shape[1]):
                    for a in range(day.shape[2]):
                        yield t + 1, i, ell + 1, k, a, float(day[ell, k, a])


def handle(config: ExperimentConfig) -> int:
    g = load_game(config.game)
    mode, sample_count = config.reward
    if mode == SAMPLED and sample_count is None and config.epsilon > 0:
        sample_count = default_sample_count(g, config.epsilon)
        logger.info(f"Sampling {sample_count} opponent profiles per reward vector")
    params = DynamicsParams.from_epsilon(
        config.epsilon, g.max_actions, H=config.H, L=config.L, reward_mode=mode, sample_count=sample_count
    )
    trace = run_dynamics(g, params, config.seed, learner_factory=learner_factory)

    skipped: List[SkippedSwapCell] = []
    records = regret_records(trace, skipped)
    violations = [r for r in records if not r.within_bound]

    out = config.out
    write_csv(out / "trace.csv", ["day", "player", "thread", "type", "action", "probability"], trace_rows(trace))
    write_csv(
        out / "regret.csv",
        ["kind", "player", "type", "thread", "restart", "regret", "bound"],
        ((r.kind, r.player, r.type_index, r.thread, r.restart, float(r.regret), float(r.bound)) for r in records),
    )

    # regrets are measured on rewards rescaled to [0, 1]; the check works on raw utilities
    low, high = g.payoff_bounds
    threshold = 3 * params.epsilon * (high - low)
    mu = empirical_distribution(trace)
    report: Optional[EquilibriumReport] = None
    check_skipped: Optional[str] = None
    try:
        report = check_every_type_nfce(mu, g, threshold)
    except ScaleCapExceededError as e:
        check_skipped = str(e)
        logger.warning(f"Skipping the every-type check at {threshold:g}: {e}")

    thread_ratios = [r.regret / r.bound for r in records if r.kind == "thread_external"]
    swaps = [r.regret for r in records if r.kind == "type_swap"]
    summary = RunSummary(
        ok=not violations and not skipped and report is not None and report.satisfied,
        seed=config.seed,
        epsilon=params.epsilon,
        H=params.H,
        L=params.L,
        T=params.T,
        reward_mode=f"{mode}:{sample_count}" if mode == SAMPLED else mode,
        expected_utility=expected_utility(g, mu).tolist(),
        max_thread_regret_ratio=max(thread_ratios, default=0.0),
        max_swap_regret_per_day=max(swaps, default=0.0) / params.T,
        bound_violations=len(violations),
        skipped_swap_cells=skipped,
        equilibrium=report,
        equilibrium_skipped=check_skipped,
    )
    write_text(out / "summary.json", summary.model_dump_json(indent=2))

    if not config.assert_bounds:
        return 0
    status = "skipped" if report is None else ("passed" if report.satisfied else "failed")
    if violations or status == "failed":
        for r in violations[:5]:
            logger.error(f"{r.kind} regret {r.regret:.6g} > bound {r.bound:.6g} (player {r.player}, type {r.type_index})")
        raise BoundViolationError(
            f"{len(violations)} regret bound violations; every-type check at {threshold:g}: {status}"
        )
    if skipped or report is None:
        raise ScaleCapExceededError(
            f"Cannot assert the bounds over the decomposition cap: {len(skipped)} swap cells skipped, "
            f"every-type check {status}"
        )
    return 0
