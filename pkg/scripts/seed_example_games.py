import os, sys
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np

from equilearn.dependencies import make_rng
from equilearn.models.game_file import MixtureFile, dump_game, dump_mixture
from equilearn.services.bayes_game import BayesianGame, random_game

DATA_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "data")


def matching_pennies() -> BayesianGame:
    """Single-type zero-sum game shifted into [0, 1]; uniform play is the unique Nash equilibrium."""
    win = np.array([[1.0, 0.0], [0.0, 1.0]])
    u0 = win.reshape(1, 1, 2, 2)
    u1 = (1.0 - win).reshape(1, 1, 2, 2)
    return BayesianGame((1, 1), (2, 2), np.ones((1, 1)), (u0, u1))


def type_matching_game() -> BayesianGame:
    """
    Two players, two independent uniform types, two actions:
    u_i = 0.6 * [a_i == theta_i] + 0.4 * [a_0 == a_1].
    Playing one's own type is a strict BNE.
    """
    u = [np.zeros((2, 2, 2, 2)) for _ in range(2)]
    for t0 in range(2):
        for t1 in range(2):
            for a0 in range(2):
                for a1 in range(2):
                    coordinate = 0.4 * (a0 == a1)
                    u[0][t0, t1, a0, a1] = 0.6 * (a0 == t0) + coordinate
                    u[1][t0, t1, a0, a1] = 0.6 * (a1 == t1) + coordinate
    return BayesianGame((2, 2), (2, 2), np.full((2, 2), 0.25), tuple(u))


def type_matching_bne() -> list:
    """Per-player (K, n) tables of the planted BNE: play your own type."""
    return [np.eye(2), np.eye(2)]


def seed_examples(out_dir: str = DATA_DIR) -> None:
    os.makedirs(out_dir, exist_ok=True)
    files = {
        "matching_pennies.json": dump_game(matching_pennies()),
        "type_matching.json": dump_game(type_matching_game()),
        "type_matching_bne.json": dump_mixture(MixtureFile(components=[[t.tolist() for t in type_matching_bne()]])),
        "random_2x3x2.json": dump_game(random_game((2, 2), (3, 3), make_rng(7))),
    }
    for name, text in files.items():
        path = os.path.join(out_dir, name)
        with open(path, "w") as f:
            f.write(text + "\n")
        print(f"Seeded {path}")


if __name__ == "__main__":
    seed_examples(sys.argv[1] if len(sys.argv) > 1 else DATA_DIR)
