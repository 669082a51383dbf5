from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, ValidationError, model_validator

from equilearn.exceptions import DistributionError, GameValidationError
from equilearn.services.bayes_game import (
    BayesianGame,
    BehaviorStrategy,
    CorrelatedProfile,
    StrategyProfileDist,
    validate_game,
)


# ---------------------------
# Game JSON
# ---------------------------

class GameFile(BaseModel):
    """Flat row-major tables, last index fastest."""
    players: int = Field(ge=1)
    types: List[int]
    actions: List[int]
    prior: List[float]
    utilities: List[List[float]]
    payoff_bounds: Optional[Tuple[float, float]] = None  # defaults to [0, 1]

    @model_validator(mode="after")
    def check_sizes(self):
        m = self.players
        if len(self.types) != m or len(self.actions) != m:
            raise ValueError(f"'types' and 'actions' must list {m} entries")
        if any(k < 1 for k in self.types) or any(n < 1 for n in self.actions):
            raise ValueError("Type and action counts must be positive")
        theta = int(np.prod(self.types))
        if len(self.prior) != theta:
            raise ValueError(f"'prior' must have {theta} entries, got {len(self.prior)}")
        if len(self.utilities) != m:
            raise ValueError(f"'utilities' must hold {m} tables")
        size = theta * int(np.prod(self.actions))
        for i, table in enumerate(self.utilities):
            if len(table) != size:
                raise ValueError(f"Utility table {i} must have {size} entries, got {len(table)}")
        return self

    def to_game(self) -> BayesianGame:
        types, actions = tuple(self.types), tuple(self.actions)
        g = BayesianGame(
            types,
            actions,
            np.asarray(self.prior, dtype=np.float64).reshape(types),
            tuple(np.asarray(u, dtype=np.float64).reshape(types + actions) for u in self.utilities),
            tuple(self.payoff_bounds) if self.payoff_bounds is not None else (0.0, 1.0),
        )
        validate_game(g)
        return g

    @classmethod
    def from_game(cls, g: BayesianGame) -> "GameFile":
        return cls(
            players=g.m,
            types=list(g.type_counts),
            actions=list(g.action_counts),
            prior=g.prior.ravel().tolist(),
            utilities=[u.ravel().tolist() for u in g.utilities],
            payoff_bounds=None if tuple(g.payoff_bounds) == (0.0, 1.0) else tuple(g.payoff_bounds),
        )


def load_game(path) -> BayesianGame:
    """Read and validate a game file; every failure surfaces as GameValidationError."""
    try:
        text = Path(path).read_text()
        return GameFile.model_validate_json(text).to_game()
    except (OSError, ValidationError, ValueError) as e:
        if isinstance(e, GameValidationError):
            raise
        raise GameValidationError(f"Invalid game file {path}: {e}") from e


def dump_game(g: BayesianGame) -> str:
    return GameFile.from_game(g).model_dump_json(exclude_none=True, indent=2)


# ---------------------------
# Mixture-of-products JSON
# ---------------------------

class MixtureFile(BaseModel):
    """components[t][i] is player i's (K_i, n_i) behavior table in component t; weights are uniform."""
    components: List[List[List[List[float]]]] = Field(min_length=1)
    kibitzer: Optional[List[List[float]]] = None  # per component distribution over A_K

    @model_validator(mode="after")
    def check_kibitzer(self):
        if self.kibitzer is not None and len(self.kibitzer) != len(self.components):
            raise ValueError("'kibitzer' must give one distribution per component")
        return self

    def tables(self, g: BayesianGame) -> List[List[np.ndarray]]:
        result = []
        for t, component in enumerate(self.components):
            if len(component) != g.m:
                raise DistributionError(f"Component {t} has {len(component)} players, the game has {g.m}")
            tables = []
            for i, table in enumerate(component):
                arr = np.asarray(table, dtype=np.float64)
                if arr.shape != (g.type_counts[i], g.action_counts[i]):
                    raise DistributionError(
                        f"Component {t}, player {i}: shape {arr.shape}, expected {(g.type_counts[i], g.action_counts[i])}"
                    )
                tables.append(arr)
            result.append(tables)
        return result

    def to_profile(self, g: BayesianGame) -> CorrelatedProfile:
        return CorrelatedProfile(tuple(
            StrategyProfileDist(tuple(BehaviorStrategy(t) for t in tables)) for tables in self.tables(g)
        ))

    @classmethod
    def from_profile(cls, mu: CorrelatedProfile) -> "MixtureFile":
        """Only components whose per-player mixtures have a single behavior strategy can be written."""
        components = []
        for c in mu.components:
            if any(len(s.components) != 1 for s in c.per_player):
                raise DistributionError("Expand mixed per-player strategies before writing a mixture file")
            components.append([s.components[0].table.tolist() for s in c.per_player])
        return cls(components=components)


def load_mixture(path) -> MixtureFile:
    try:
        return MixtureFile.model_validate_json(Path(path).read_text())
    except (OSError, ValidationError, ValueError) as e:
        raise DistributionError(f"Invalid mixture file {path}: {e}") from e


def dump_mixture(mixture: MixtureFile) -> str:
    return mixture.model_dump_json(exclude_none=True, indent=2)
