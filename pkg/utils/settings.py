"""
Settings
Environment-backed defaults; command-line flags override them
"""

from functools import lru_cache
from typing import Optional

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="PRIVACARE_", env_file=".env", extra="ignore")

    log_level: str = Field(default="INFO", description="Root logging level")
    log_dir: Optional[str] = Field(None, description="Directory for rotating log files")
    seed: int = Field(default=0, description="Default seed for every randomized stage")

    # encryption
    ring_dimension: int = Field(default=8192, description="Ring degree n")
    plain_bits: int = Field(default=59, description="Bit size of each plaintext prime")
    plain_instances: int = Field(default=2, ge=1, description="Parallel plaintext CRT instances")
    coeff_bits: int = Field(default=62, description="Bit size of each coefficient prime")
    coeff_count: int = Field(default=4, ge=1, description="Coefficient primes per instance")
    relin_base_bits: int = Field(default=16, description="log2 of the relinearization base")
    noise_std: float = Field(default=3.2, gt=0, description="Error distribution standard deviation")

    # fixed point
    input_bits: int = Field(default=15, ge=0, description="Input scale bits")
    weight_bits: int = Field(default=15, ge=0, description="Weight scale bits")

    # approximation
    interval_a: float = Field(default=4.0, gt=0, description="Calibrated approximation half-width")
    grid_points: int = Field(default=100_001, description="Dense grid size for max-error evaluation")

    diabetes_csv: Optional[str] = Field(None, description="Path of the public diabetes CSV, when available")


@lru_cache()
def get_settings() -> Settings:
    return Settings()
