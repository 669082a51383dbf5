import logging

from equilearn.models.experiment import ExperimentConfig
from equilearn.models.game_file import load_game, load_mixture
from equilearn.services.equilibrium_check import (
    EVERY_TYPE,
    EX_ANTE,
    check_bne_product,
    check_every_type_nfce,
    check_ex_ante_nfce,
)

logger = logging.getLogger(__name__)

NAME = "check-eq"
HELP = "Check a mixture-of-products distribution against an equilibrium notion"

NOTIONS = ("every-type", "ex-ante", "bne", "bne-ex-ante")


def handle(config: ExperimentConfig, notion: str = "every-type") -> int:
    if config.mu is None:
        raise ValueError("check-eq needs --mu")
    g = load_game(config.game)
    mu = load_mixture(config.mu).to_profile(g)
    if notion == "every-type":
        report = check_every_type_nfce(mu, g, config.epsilon)
    elif notion == "ex-ante":
        report = check_ex_ante_nfce(mu, g, config.epsilon)
    else:
        if mu.rank != 1:
            raise ValueError(f"BNE checks need a single product component, got {mu.rank}")
        mode = EVERY_TYPE if notion == "bne" else EX_ANTE
        report = check_bne_product(mu.components[0], g, config.epsilon, mode=mode)
    print(report.model_dump_json(indent=2))
    if not report.satisfied:
        logger.error(f"Not an {report.notion} at eps={config.epsilon}: worst gain {report.worst_gain:.6g}")
        return 1
    return 0
