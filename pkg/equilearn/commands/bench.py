import json
import logging
import time
from typing import Callable, Dict

import numpy as np

from equilearn.commands.files import write_text
from equilearn.dependencies import make_rng
from equilearn.models.experiment import ExperimentConfig
from equilearn.services.bayes_game import random_game
from equilearn.services.multiscale_dynamics import DynamicsParams, per_type_swap_regret, run_dynamics
from equilearn.services.regret_core import (
    average_tv_to_truth,
    mwu_default_eta,
    mwu_external_regret,
    mwu_play,
    mwu_regret_bound,
    realizable_sequence,
    vovk_run,
    vovk_tv_bound,
)

logger = logging.getLogger(__name__)

NAME = "bench"
HELP = "Time the learning primitives and the dynamics at desk scale"


def _timed(fn: Callable[[], Dict]) -> Dict:
    start = time.perf_counter()
    result = fn()
    result["seconds"] = round(time.perf_counter() - start, 4)
    return result


def mwu_sweep(seed: int) -> Dict:
    worst = 0.0
    runs = 0
    for n in (2, 4, 8):
        for T in (64, 256, 512):
            rng = make_rng(seed, n, T)
            for _ in range(25):
                rewards = rng.random((T, n))
                played = mwu_play(rewards, mwu_default_eta(n, T))
                worst = max(worst, mwu_external_regret(played, rewards) / mwu_regret_bound(n, T))
                runs += 1
    return {"runs": runs, "max_regret_over_bound": worst}


def vovk_sweep(seed: int) -> Dict:
    worst = -np.inf
    for experts in (2, 8, 16):
        for horizon in (64, 256):
            rng = make_rng(seed, experts, horizon)
            tables = rng.dirichlet(np.ones(4), size=(experts, 3))
            tv = []
            for _ in range(20):
                truth = int(rng.integers(experts))
                contexts, outcomes = realizable_sequence(tables, truth, horizon, rng)
                tv.append(average_tv_to_truth(vovk_run(tables, contexts, outcomes), tables, truth))
            worst = max(worst, float(np.mean(tv)) - vovk_tv_bound(experts, horizon))
    return {"max_mean_tv_minus_bound": worst}


def dynamics_sweep(seed: int) -> Dict:
    days = 0
    worst = 0.0
    for K in (1, 2, 3):
        g = random_game((K, K), (3, 3), make_rng(seed, K))
        params = DynamicsParams.from_epsilon(0.5, 3, H=8, L=2)
        trace = run_dynamics(g, params, seed)
        days += params.T
        for i in range(2):
            for k in range(K):
                worst = max(worst, per_type_swap_regret(trace, i, k) / (3 * params.epsilon * params.T))
    return {"days": days, "max_swap_regret_over_bound": worst}


def handle(config: ExperimentConfig) -> int:
    results = {
        "mwu": _timed(lambda: mwu_sweep(config.seed)),
        "vovk": _timed(lambda: vovk_sweep(config.seed)),
        "dynamics": _timed(lambda: dynamics_sweep(config.seed)),
    }
    for name, result in results.items():
        logger.info(f"bench {name}: {result}")
    write_text(config.out / "bench.json", json.dumps(results, indent=2, sort_keys=True))
    return 0
