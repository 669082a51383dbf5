from pathlib import Path
from typing import Optional, Tuple

from pydantic import BaseModel, Field, field_validator

SEED_LIMIT = 2 ** 64


def parse_reward_mode(value: str) -> Tuple[str, Optional[int]]:
    """'exact', 'sampled' or 'sampled:N' -> (mode, N); a bare 'sampled' leaves N to the game and eps."""
    if value == "exact":
        return "exact", None
    if value == "sampled":
        return "sampled", None
    mode, sep, count = value.partition(":")
    if mode != "sampled" or not sep or not count.isdigit() or int(count) < 1:
        raise ValueError(f"Reward mode must be 'exact', 'sampled' or 'sampled:N' with N >= 1, got {value!r}")
    return "sampled", int(count)


class ExperimentConfig(BaseModel):
    command: str
    game: Optional[Path] = None
    mu: Optional[Path] = None
    epsilon: float = Field(0.5, ge=0, le=1)
    seed: int = Field(0, ge=0, lt=SEED_LIMIT)
    reward_mode: str = "exact"
    rollouts: int = Field(200, ge=1)
    out: Path = Path("out")
    H: Optional[int] = Field(None, ge=1)
    L: Optional[int] = Field(None, ge=1)
    t_rank: Optional[int] = Field(None, ge=1)
    budget: int = Field(1000, ge=0)
    assert_bounds: bool = False

    @field_validator("game", "mu")
    @classmethod
    def path_exists(cls, v: Optional[Path]) -> Optional[Path]:
        if v is not None and not v.is_file():
            raise ValueError(f"File not found: {v}")
        return v

    @field_validator("reward_mode")
    @classmethod
    def valid_reward_mode(cls, v: str) -> str:
        parse_reward_mode(v)
        return v

    @property
    def reward(self) -> Tuple[str, Optional[int]]:
        return parse_reward_mode(self.reward_mode)
