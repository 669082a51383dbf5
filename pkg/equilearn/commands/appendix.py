import logging

from equilearn.commands.files import write_text
from equilearn.config import get_settings
from equilearn.models.experiment import ExperimentConfig
from equilearn.models.game_file import MixtureFile, dump_game, dump_mixture
from equilearn.models.reports import AppendixReport
from equilearn.services.bayes_game import BehaviorStrategy, CorrelatedProfile, StrategyProfileDist
from equilearn.services.equilibrium_check import (
    appendix_a_demo,
    appendix_a_game,
    appendix_a_profile,
    appendix_window,
    behaviorized_best_swap_gain,
)

logger = logging.getLogger(__name__)

NAME = "appendix-a"
HELP = "Behaviorizing a rank-2 correlated equilibrium: swap gains before and after"


def pure_expansion(n: int) -> CorrelatedProfile:
    """The rank-2 profile as six uniform pure components (weights 1/6, 2/6, 2/6, 1/6)."""
    all_zero = BehaviorStrategy.pure((0,) * n, 4)
    all_one = BehaviorStrategy.pure((1,) * n, 4)
    bob = [BehaviorStrategy.pure((b,), 2) for b in range(2)]
    layout = [(all_zero, 0), (all_one, 0), (all_one, 0), (all_zero, 1), (all_zero, 1), (all_one, 1)]
    return CorrelatedProfile(tuple(StrategyProfileDist.of(alice, bob[b]) for alice, b in layout))


def handle(config: ExperimentConfig, n: int = 100) -> int:
    ce_gain, behaviorized = appendix_a_demo(n)
    report = AppendixReport(
        n=n,
        window=appendix_window(n),
        ce_gain=ce_gain,
        behaviorized_gain=behaviorized,
        behaviorized_best_gain=behaviorized_best_swap_gain(n),
    )
    print(report.model_dump_json(indent=2))
    # the behaviorized profile has 2^n positive-mass strategies for check-eq to scan
    if 2 ** n <= get_settings().decomposition_cap:
        out = config.out
        write_text(out / "game.json", dump_game(appendix_a_game(n)))
        write_text(out / "mu.json", dump_mixture(MixtureFile.from_profile(pure_expansion(n))))
        write_text(out / "mu_behaviorized.json", dump_mixture(MixtureFile.from_profile(appendix_a_profile(n).behaviorize())))
    else:
        logger.info(f"Skipping example files: 2^{n} behaviorized strategies exceed the decomposition cap")
    return 0
