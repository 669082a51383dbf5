import argparse
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from equilearn.commands import appendix, bench, check_eq, reduction, run_dynamics
from equilearn.config import settings
from equilearn.dependencies import shutdown_executor
from equilearn.exceptions import EquilearnError
from equilearn.models.experiment import ExperimentConfig

logger = logging.getLogger("equilearn")

COMMANDS = {m.NAME: m for m in (run_dynamics, check_eq, reduction, appendix, bench)}


def configure_logging(level: Optional[str] = None) -> None:
    """Logs go to stderr; stdout and output files carry results only."""
    logging.basicConfig(
        stream=sys.stderr,
        level=level or settings.log_level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="equilearn", description="Learning dynamics for correlated equilibria in Bayesian games")
    parser.add_argument("--log-level", default=None, help="Overrides EQUILEARN_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, *flags: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=COMMANDS[name].HELP)
        if "game" in flags:
            p.add_argument("--game", type=str, required=True, help="Game JSON file")
        if "mu" in flags:
            p.add_argument("--mu", type=str, default=None, help="Mixture-of-products JSON file")
        if "eps" in flags:
            p.add_argument("--eps", type=float, default=0.5)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", type=str, default="out", help="Output directory")
        return p

    p = add(run_dynamics.NAME, "game", "eps")
    p.add_argument("--H", type=int, default=None, help="Rounds per block; must be >= ln(n)/eps^2")
    p.add_argument("--L", type=int, default=None, help="Thread count; must be >= 1/eps")
    p.add_argument("--reward-mode", default="exact", help="exact | sampled | sampled:N; bare sampled derives N from the game and eps")
    p.add_argument("--assert-bounds", action="store_true", help="Exit 2 when any regret bound or the 3*eps check fails")

    p = add(check_eq.NAME, "game", "mu", "eps")
    p.add_argument("--notion", choices=check_eq.NOTIONS, default="every-type")

    p = add(reduction.NAME, "game", "mu", "eps")
    p.add_argument("--H", type=int, default=None, help="Gadget repetitions; defaults to max(2, ceil(ln(T)/eps^2))")
    p.add_argument("--T-rank", dest="t_rank", type=int, default=None, help="Keep the last T days when building mu from dynamics")
    p.add_argument("--budget", type=int, default=1000, help="Max gadgets visited")
    p.add_argument("--rollouts", type=int, default=200, help="Rollouts for the Kibitzer deviation estimate")

    p = add(appendix.NAME)
    p.add_argument("--n", type=int, default=100, help="Number of Alice's types")

    add(bench.NAME)
    return parser


def to_config(args: argparse.Namespace) -> ExperimentConfig:
    fields = {
        "command": args.command,
        "game": getattr(args, "game", None),
        "mu": getattr(args, "mu", None),
        "epsilon": getattr(args, "eps", 0.5),
        "seed": args.seed,
        "reward_mode": getattr(args, "reward_mode", "exact"),
        "rollouts": getattr(args, "rollouts", 200),
        "out": args.out,
        "H": getattr(args, "H", None),
        "L": getattr(args, "L", None),
        "t_rank": getattr(args, "t_rank", None),
        "budget": getattr(args, "budget", 1000),
        "assert_bounds": getattr(args, "assert_bounds", False),
    }
    return ExperimentConfig(**fields)


def dispatch(config: ExperimentConfig, args: argparse.Namespace) -> int:
    if config.command == check_eq.NAME:
        return check_eq.handle(config, notion=args.notion)
    if config.command == appendix.NAME:
        return appendix.handle(config, n=args.n)
    return COMMANDS[config.command].handle(config)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)
    try:
        config = to_config(args)
        logger.info(f"Starting {config.command} (seed={config.seed})")
        return dispatch(config, args)
    except ValidationError as e:
        logger.error(f"Invalid arguments: {e}")
        return 1
    except EquilearnError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except ValueError as e:
        logger.error(f"Invalid input: {e}")
        return 1
    finally:
        shutdown_executor()


if __name__ == "__main__":
    sys.exit(main())
