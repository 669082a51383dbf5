# equilearn/config.py
import os
from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict
from dotenv import load_dotenv
load_dotenv()


class Settings(BaseSettings):
    # Parallelism
    threads: int = Field(1, ge=1, description="Worker cap for per-player / per-rollout evaluation")

    # Enumeration caps
    pure_strategy_cap: int = Field(4096, ge=1, description="Max |S_i| enumerated by swap-gain checks")
    swap_function_cap: int = Field(65536, ge=1, description="Max swap functions enumerated literally")
    expansion_cap: int = Field(1 << 16, ge=1, description="Max pure-product components when expanding a mixture")
    decomposition_cap: int = Field(1 << 20, ge=1, description="Max positive-mass source strategies scanned per swap-gain cell")

    # Numerics
    normalization_tol: float = Field(1e-9, gt=0)
    sample_constant: float = Field(8.0, gt=0, description="c in ceil(c*log(mnK/eps)/eps^2)")

    # Logging
    log_level: str = "INFO"

    model_config = SettingsConfigDict(
        env_prefix="EQUILEARN_",
        env_file=".env",
        extra="ignore"  # Allow unrelated environment variables
    )

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        level = v.upper()
        if level not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            raise ValueError(f"Invalid log level: {v}")
        return level


def cpu_bound_threads(requested: int) -> int:
    """Clamp a requested worker count to what the machine offers."""
    return max(1, min(requested, os.cpu_count() or 1))


settings = Settings()


def get_settings() -> Settings:
    return settings
